mod common;

use common::*;
use detsum_core::asym::Asym;
use detsum_core::greens::{build_expsum, build_greens};
use detsum_core::linalg::{Mat, Vector};
use detsum_core::oracle::{antisymmetrize, dense_delta_contract, dense_rayleigh, dense_target, exact_ground, fit_residual};
use detsum_core::solver::normal::rest;
use detsum_core::solver::*;
use detsum_core::space::{weighted_dot, Model, ParticleSpace, PoissonOp};
use detsum_core::wave::{norm_a, SeparatedWavefunction, SlaterTerm};

const ETA: f64 = 1e-10;

fn random_psi(r: &mut rand_chacha::ChaCha8Rng, sp: &ParticleSpace, n: usize, rank: usize) -> SeparatedWavefunction {
    let terms = (0..rank)
        .map(|_| {
            let mut m = rand_mat(r, sp.len(), n);
            for j in 0..n {
                let c = m.column(j).into_owned();
                let nrm = weighted_dot(sp, &c, &c).sqrt();
                m.column_mut(j).scale_mut(1.0 / nrm);
            }
            SlaterTerm::new(rand_vec(r, 1)[0] + 1.5, m)
        })
        .collect();
    SeparatedWavefunction::new(terms).unwrap()
}

fn block_dot(sp: &ParticleSpace, a: &Mat, b: &Mat) -> f64 {
    (0..a.ncols()).map(|l| weighted_dot(sp, &a.column(l).into_owned(), &b.column(l).into_owned())).sum()
}

/// `(A x)(l)` straight from the delta products.
fn normal_by_delta(model: &Model, psi: &SeparatedWavefunction, k: usize, x: &Mat) -> Mat {
    let asym = Asym::new(&model.space, &model.poisson, ETA);
    let mut out = Mat::zeros(x.nrows(), psi.rank());
    for (l, tl) in psi.terms.iter().enumerate() {
        let bra = rest(&tl.orbitals, k);
        let mut acc = Vector::zeros(x.nrows());
        for (lp, tp) in psi.terms.iter().enumerate() {
            let mut ket = tp.orbitals.clone();
            ket.set_column(k, &x.column(lp));
            acc += asym.delta(&bra, k, &ket).unwrap() * (tl.coef * tp.coef);
        }
        out.set_column(l, &acc);
    }
    out
}

#[test]
fn kernels_match_delta_products() {
    let mut checked = [0usize; 3];
    for n in [2usize, 3] {
        for mtot in [6usize, 8] {
            let model = small_model(mtot);
            let sp = &model.space;
            for q in 0..n {
                for seed in 0..4u64 {
                    let mut r = rng(1000 * n as u64 + 100 * mtot as u64 + 10 * q as u64 + seed);
                    let mut psi = random_psi(&mut r, sp, n, 2);
                    let k = (seed as usize) % n;
                    // Make the off-direction overlap between the two terms deficient by q.
                    let (bra, ket) = deficient_pair(&mut r, sp, n - 1, q);
                    let mut o0 = psi.terms[0].orbitals.clone();
                    let mut o1 = psi.terms[1].orbitals.clone();
                    let mut c = 0;
                    for i in 0..n {
                        if i != k {
                            o0.set_column(i, &bra.column(c));
                            o1.set_column(i, &ket.column(c));
                            c += 1;
                        }
                    }
                    psi.terms[0].orbitals = o0;
                    psi.terms[1].orbitals = o1;
                    let kernel = build_normal_matrix(sp, &psi, k, ETA).unwrap();
                    checked[kernel.block(0, 1).deficiency().min(2)] += 1;
                    let x = rand_mat(&mut r, sp.len(), 2);
                    let got = apply_normal(&kernel, &x);
                    let want = normal_by_delta(&model, &psi, k, &x);
                    assert!(mat_rel(&got, &want) < 1e-8, "n={} q={} err={:e}", n, q, mat_rel(&got, &want));
                }
            }
        }
    }
    assert!(checked.iter().all(|&c| c > 0), "{:?}", checked);
}

#[test]
fn single_orthonormal_term_gives_a_projector() {
    let model = small_model(8);
    let sp = &model.space;
    for n in 1..=3 {
        let mut r = rng(n as u64);
        let raw = rand_mat(&mut r, sp.len(), n);
        // Weighted Gram–Schmidt.
        let mut q = Mat::zeros(sp.len(), n);
        for j in 0..n {
            let mut v = perp_to(sp, &q.columns(0, j).into_owned(), &raw.column(j).into_owned());
            v /= weighted_dot(sp, &v, &v).sqrt();
            q.set_column(j, &v);
        }
        let psi = SeparatedWavefunction::new(vec![SlaterTerm::new(1.0, q.clone())]).unwrap();
        for k in 0..n {
            let kernel = build_normal_matrix(sp, &psi, k, ETA).unwrap();
            let x = rand_mat(&mut r, sp.len(), 1);
            let once = apply_normal(&kernel, &x);
            let twice = apply_normal(&kernel, &once);
            assert!((&twice - &once).amax() <= 1e-12 * x.amax().max(1.0));
            for j in 0..n {
                if j != k {
                    let c = weighted_dot(sp, &once.column(0).into_owned(), &q.column(j).into_owned());
                    assert!(c.abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn normal_operator_is_self_adjoint_and_semidefinite() {
    for seed in 0..20u64 {
        let mut r = rng(500 + seed);
        let n = 2 + (seed % 2) as usize;
        let model = small_model(8);
        let sp = &model.space;
        let psi = random_psi(&mut r, sp, n, 3);
        let k = (seed as usize) % n;
        let kernel = build_normal_matrix(sp, &psi, k, ETA).unwrap();
        let x = rand_mat(&mut r, sp.len(), 3);
        let y = rand_mat(&mut r, sp.len(), 3);
        let xay = block_dot(sp, &x, &apply_normal(&kernel, &y));
        let axy = block_dot(sp, &apply_normal(&kernel, &x), &y);
        assert!((xay - axy).abs() <= 1e-10 * xay.abs().max(1.0));
        let xax = block_dot(sp, &x, &apply_normal(&kernel, &x));
        assert!(xax >= -1e-10 * block_dot(sp, &x, &x));
    }
}

#[test]
fn rhs_matches_dense_resolvent() {
    let model = small_model(8);
    let sp = &model.space;
    let asym = Asym::new(sp, &model.poisson, ETA);
    let eps = 1e-8;
    let es = build_expsum(eps, 1e8).unwrap();
    let mu = -1.3;
    for (seed, rank) in [(1u64, 1usize), (2, 2), (3, 2)] {
        let mut r = rng(seed);
        let psi = random_psi(&mut r, sp, 2, rank);
        let pt = random_psi(&mut r, sp, 2, rank);
        let rep = build_greens(&es, mu, &model.one_body, 2).unwrap();
        let target = antisymmetrize(&dense_target(&model, &psi, mu).unwrap());
        for k in 0..2 {
            let b = build_rhs(&asym, &model.one_body, &pt, &psi, &rep, k).unwrap();
            for l in 0..rank {
                let want = dense_delta_contract(sp, &rest(&pt.terms[l].orbitals, k), k, &target) * pt.terms[l].coef;
                let got = b.column(l).into_owned();
                assert!(vec_close(&got, &want, 5.0 * eps), "seed {} k {} l {}: {:e}", seed, k, l, (&got - &want).norm() / want.norm());
                // Orthogonal to the fixed orbitals of the same term.
                for i in 0..2 {
                    if i != k {
                        let c = weighted_dot(sp, &got, &pt.terms[l].orbitals.column(i).into_owned());
                        assert!(c.abs() <= 1e-8 * got.norm(), "{:e}", c);
                    }
                }
            }
        }
    }
}

#[test]
fn rhs_vanishes_without_potentials() {
    let mut model = small_model(8);
    model.one_body.vdiag.fill(0.0);
    model.poisson = PoissonOp { pmat: Mat::zeros(4, 4) };
    let sp = &model.space;
    let asym = Asym::new(sp, &model.poisson, ETA);
    let es = build_expsum(1e-4, 1e8).unwrap();
    let rep = build_greens(&es, -1.0, &model.one_body, 2).unwrap();
    let mut r = rng(9);
    let psi = random_psi(&mut r, sp, 2, 2);
    let b = build_rhs(&asym, &model.one_body, &psi, &psi, &rep, 0).unwrap();
    assert_eq!(b.amax(), 0.0);
}

#[test]
fn cg_agrees_with_dense_solve() {
    let model = small_model(8);
    let sp = &model.space;
    for seed in 0..6u64 {
        let mut r = rng(40 + seed);
        let psi = random_psi(&mut r, sp, 2, 2);
        let kernel = build_normal_matrix(sp, &psi, 0, ETA).unwrap();
        // A consistent right-hand side.
        let b = apply_normal(&kernel, &rand_mat(&mut r, sp.len(), 2));
        let x0 = Mat::zeros(sp.len(), 2);
        let cg = cg_solve(sp, &kernel, &b, &x0, 200, 1e-13).unwrap();
        let dense = dense_solve(sp, &kernel, &b, &x0).unwrap();
        assert!(cg.residual <= 1e-12, "{:e}", cg.residual);
        // Solutions may differ by a nullspace component; their images agree.
        let ac = apply_normal(&kernel, &cg.x);
        let ad = apply_normal(&kernel, &dense.x);
        assert!(mat_rel(&ac, &ad) <= 1e-8);
        let diff = &cg.x - &dense.x;
        let dd = block_dot(sp, &diff, &apply_normal(&kernel, &diff));
        assert!(dd.abs() <= 1e-16 * block_dot(sp, &b, &b).max(1.0) + 1e-14);
    }
}

#[test]
fn cg_on_a_projector_takes_one_step() {
    let model = small_model(8);
    let sp = &model.space;
    let mut r = rng(3);
    let raw = rand_mat(&mut r, sp.len(), 2);
    let mut q = Mat::zeros(sp.len(), 2);
    for j in 0..2 {
        let mut v = perp_to(sp, &q.columns(0, j).into_owned(), &raw.column(j).into_owned());
        v /= weighted_dot(sp, &v, &v).sqrt();
        q.set_column(j, &v);
    }
    let psi = SeparatedWavefunction::new(vec![SlaterTerm::new(1.0, q)]).unwrap();
    let kernel = build_normal_matrix(sp, &psi, 0, ETA).unwrap();
    let b = apply_normal(&kernel, &rand_mat(&mut r, sp.len(), 1));
    let res = cg_solve(sp, &kernel, &b, &Mat::zeros(sp.len(), 1), 10, 1e-12).unwrap();
    assert_eq!(res.steps, 1);
    assert!(res.residual <= 1e-12);
}

#[test]
fn one_particle_fit_is_exact() {
    let model = small_model(8);
    let sp = &model.space;
    let mut r = rng(11);
    let psi = random_psi(&mut r, sp, 1, 1);
    let cfg = SolveConfig { n: 1, rank: 1, eps_expsum: 1e-10, cg_tol: 1e-14, cg_steps: 100, ..SolveConfig::default() };
    let es = build_expsum(cfg.eps_expsum, cfg.expsum_upper).unwrap();
    let mu = -0.8;
    let rep = build_greens(&es, mu, &model.one_body, 1).unwrap();
    let fit = als_direction_solve(&model, &cfg, &rep, &psi, &psi, 0).unwrap();
    let res = fit_residual(&model, &fit, &psi, mu).unwrap();
    let scale = norm_a(sp, &fit).unwrap();
    assert!(res <= 1e-8 * scale, "{:e}", res);
}

#[test]
fn dense_solves_never_increase_the_fit_residual() {
    let model = small_model(8);
    let sp = &model.space;
    let mut r = rng(21);
    let psi = random_psi(&mut r, sp, 2, 2);
    let cfg = SolveConfig { n: 2, rank: 2, dense_solve: true, ..SolveConfig::default() };
    let es = build_expsum(1e-10, 1e4).unwrap();
    let mu = -1.0;
    let rep = build_greens(&es, mu, &model.one_body, 2).unwrap();
    let mut pt = psi.clone();
    let mut last = fit_residual(&model, &pt, &psi, mu).unwrap();
    for _ in 0..2 {
        for k in 0..2 {
            pt = als_direction_solve(&model, &cfg, &rep, &pt, &psi, k).unwrap();
            let now = fit_residual(&model, &pt, &psi, mu).unwrap();
            assert!(now <= last + 1e-12, "{} > {}", now, last);
            last = now;
        }
    }
}

#[test]
fn rayleigh_matches_oracle() {
    let model = small_model(8);
    let sp = &model.space;
    for (seed, n, rank) in [(1u64, 1usize, 1usize), (2, 2, 1), (3, 2, 3), (4, 3, 2)] {
        let mut r = rng(seed);
        let psi = random_psi(&mut r, sp, n, rank);
        let got = rayleigh(&model, &psi, ETA).unwrap();
        let want = dense_rayleigh(&model, &psi).unwrap();
        assert!(close(got, want), "{} vs {}", got, want);
    }
}

#[test]
fn newton_update_is_stationary_at_an_eigenpair() {
    let model = small_model(8);
    let sp = &model.space;
    let (e, _) = exact_ground(&model, 1).unwrap();
    let psi = initial_guess(&model, 1, 1, 0).unwrap();
    // Replace the perturbed orbital by the exact one.
    let mut h = model.one_body.tmat.clone();
    for j in 0..4 {
        h[(j, j)] += model.one_body.vdiag[j];
    }
    let eig = h.symmetric_eigen();
    let imin = eig.eigenvalues.imin();
    let mut f = Vector::zeros(sp.len());
    for j in 0..4 {
        f[j] = eig.eigenvectors[(j, imin)];
    }
    f /= weighted_dot(sp, &f, &f).sqrt();
    let mut exact = psi.clone();
    exact.terms[0].orbitals.set_column(0, &f);
    exact.terms[0].coef = 1.0;
    let mu = mu_newton(&model, &exact, &exact, e, ETA).unwrap();
    assert!((mu - e).abs() <= 1e-8);
}

#[test]
fn gradient_matches_finite_differences() {
    let model = small_model(8);
    let sp = &model.space;
    let mut r = rng(77);
    let psi = random_psi(&mut r, sp, 2, 2);
    let (_, g) = gradient(&model, &psi, ETA).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (l, gl) in g.iter().enumerate() {
        for j in 0..2 {
            for gamma in [0usize, 3, 5, 7] {
                let mut p = psi.clone();
                p.terms[l].orbitals[(gamma, j)] += h;
                let up = rayleigh(&model, &p, ETA).unwrap();
                p.terms[l].orbitals[(gamma, j)] -= 2.0 * h;
                let down = rayleigh(&model, &p, ETA).unwrap();
                let fd = (up - down) / (2.0 * h);
                let an = sp.full_weights[gamma] * gl[(gamma, j)];
                worst = worst.max((fd - an).abs() / an.abs().max(1e-3));
            }
        }
    }
    assert!(worst <= 1e-6, "{:e}", worst);
}

#[test]
fn line_search_steps_do_not_raise_the_quotient() {
    let model = small_model(8);
    let sp = &model.space;
    for seed in 0..5u64 {
        let mut r = rng(90 + seed);
        let psi = random_psi(&mut r, sp, 2, 2);
        for j in 0..2 {
            let s = direction_step(&model, &psi, j, ETA).unwrap();
            assert!(s.after <= s.before + 1e-12);
            assert!(s.after < s.before);
        }
        let full = grad_step(&model, &psi, GradMode::Full, ETA).unwrap();
        assert!(full.after <= full.before + 1e-12);
    }
}

#[test]
fn gradient_vanishes_at_a_one_particle_eigenstate() {
    let model = small_model(8);
    let sp = &model.space;
    let mut h = model.one_body.tmat.clone();
    for j in 0..4 {
        h[(j, j)] += model.one_body.vdiag[j];
    }
    let eig = h.symmetric_eigen();
    let imin = eig.eigenvalues.imin();
    let mut f = Vector::zeros(sp.len());
    for j in 0..4 {
        f[j] = eig.eigenvectors[(j, imin)];
    }
    let psi = SeparatedWavefunction::new(vec![SlaterTerm::new(1.0, Mat::from_column_slice(8, 1, f.as_slice()))]).unwrap();
    let (_, g) = gradient(&model, &psi, ETA).unwrap();
    assert!(g[0].amax() <= 1e-6);
}

#[test]
fn one_particle_iteration_finds_the_lowest_level() {
    let model = small_model(8);
    let (e, _) = exact_ground(&model, 1).unwrap();
    let cfg = SolveConfig { n: 1, rank: 1, iterations: 200, eps_expsum: 1e-10, ..SolveConfig::default() };
    let out = solve(&model, &cfg, &NoClock).unwrap();
    assert!(out.converged);
    assert!((out.mu - e).abs() <= 1e-7, "{} vs {}", out.mu, e);
}

#[test]
fn two_particle_iteration_respects_the_variational_bound() {
    let model = small_model(8);
    let (e, _) = exact_ground(&model, 2).unwrap();
    let cfg = SolveConfig { n: 2, rank: 2, iterations: 30, ..SolveConfig::default() };
    let out = solve(&model, &cfg, &NoClock).unwrap();
    for rec in &out.trace.records {
        assert!(rec.rayleigh >= e - 1e-10);
    }
    assert!(out.mu - e < 1e-2, "{} vs {}", out.mu, e);
}

#[test]
fn spin_channels_stay_separate() {
    let model = bound_model(12);
    let ms = 6;
    let cfg = SolveConfig { n: 3, rank: 2, iterations: 4, ..SolveConfig::default() };
    let out = solve(&model, &cfg, &NoClock).unwrap();
    for t in &out.psi.terms {
        for i in 0..3 {
            let other = 1 - i % 2;
            for j in 0..ms {
                assert_eq!(t.orbitals[(other * ms + j, i)], 0.0, "orbital {} leaks", i);
            }
        }
    }
}

#[test]
fn fast_path_reproduces_fresh_construction() {
    let model = bound_model(12);
    for (n, rank) in [(2usize, 2usize), (3, 2)] {
        let base = SolveConfig { n, rank, iterations: 3, mu_tol: 0.0, ..SolveConfig::default() };
        let fresh = solve(&model, &base, &NoClock).unwrap();
        let fast_cfg = SolveConfig { fast_path: true, verify_fast_path: true, ..base.clone() };
        let fast = solve(&model, &fast_cfg, &NoClock).unwrap();
        assert!(fast.fast_path.updates > 0);
        assert!(fast.fast_path.worst() <= 1e-10, "{:?}", fast.fast_path);
        for (a, b) in fresh.trace.records.iter().zip(&fast.trace.records) {
            assert!((a.mu - b.mu).abs() <= 1e-9);
        }
    }
}

#[test]
fn trace_has_the_documented_header() {
    let model = small_model(8);
    let cfg = SolveConfig { n: 2, rank: 1, iterations: 1, ..SolveConfig::default() };
    let out = solve(&model, &cfg, &NoClock).unwrap();
    let csv = out.trace.to_csv();
    assert!(csv.starts_with("iter,mu,rayleigh,psiTildeNorm,maxCgResidual,seconds\n"));
    assert_eq!(csv.lines().count(), 2);
    assert!(!out.converged);
}
