//! Randomized comparison of every fast formula against the dense oracle.

use anyhow::{anyhow, Result};
use detsum_core::asym::Asym;
use detsum_core::greens::{build_expsum, build_greens};
use detsum_core::linalg::{compute_pseudo, det_perturbed_identity, rank_one_update_factors, Mat, UpdateCase, Vector};
use detsum_core::oracle::{self, DenseState, HParts};
use detsum_core::solver::normal::rest;
use detsum_core::solver::{apply_normal, build_normal_matrix, build_rhs};
use detsum_core::space::{weighted_dot, Full, Model, ParticleSpace};
use detsum_core::wave::{SeparatedWavefunction, SlaterTerm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub max_err: f64,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Suite { name, cases: 0, failures: 0, max_err: 0.0 }
    }

    fn record(&mut self, err: f64, tol: f64) {
        self.cases += 1;
        self.max_err = self.max_err.max(err);
        if !(err <= tol) {
            self.failures += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub suites: Vec<Suite>,
    /// Oracle ground energy for the configured N, when within the oracle bounds.
    pub ground_energy: Option<f64>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.failures == 0 && s.cases > 0)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<16} {:>6} {:>6} {:>6} {:>10}\n", "suite", "cases", "pass", "fail", "max_err");
        for s in &self.suites {
            out.push_str(&format!(
                "{:<16} {:>6} {:>6} {:>6} {:>10.2e}\n",
                s.name,
                s.cases,
                s.cases - s.failures,
                s.failures,
                s.max_err
            ));
        }
        if let Some(e) = self.ground_energy {
            out.push_str(&format!("oracle ground energy = {:.17e}\n", e));
        }
        out.push_str(if self.passed() { "PASS\n" } else { "FAIL\n" });
        out
    }
}

fn rand_mat(r: &mut ChaCha8Rng, m: usize, n: usize) -> Mat {
    Mat::from_fn(m, n, |_, _| r.random_range(-1.0..1.0))
}

fn rand_vec(r: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| r.random_range(-1.0..1.0))
}

fn perp_to(sp: &ParticleSpace, basis: &Mat, v: &Vector) -> Vector {
    let mut ortho: Vec<Vector> = Vec::new();
    for j in 0..basis.ncols() {
        let mut b = basis.column(j).into_owned();
        for _ in 0..2 {
            for o in &ortho {
                let c = weighted_dot(sp, o, &b);
                b.axpy(-c, o, 1.0);
            }
        }
        let nb = weighted_dot(sp, &b, &b).sqrt();
        if nb > 1e-10 {
            ortho.push(b / nb);
        }
    }
    let mut out = v.clone();
    for _ in 0..2 {
        for o in &ortho {
            let c = weighted_dot(sp, o, &out);
            out.axpy(-c, o, 1.0);
        }
    }
    out
}

/// Bra/ket pair whose overlap has rank deficiency `q`.
fn deficient_pair(r: &mut ChaCha8Rng, sp: &ParticleSpace, n: usize, q: usize) -> (Mat, Mat) {
    let ket = rand_mat(r, sp.len(), n);
    let mut bra = rand_mat(r, sp.len(), n);
    for i in 0..q.min(n) {
        let v = perp_to(sp, &ket, &bra.column(i).into_owned());
        bra.set_column(i, &v);
    }
    if n > 1 && r.random_bool(0.5) {
        bra.swap_columns(0, n - 1);
    }
    (bra, ket)
}

/// Relative error, measured absolutely (scaled by 1e-4) for small references.
fn err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-4)
}

fn vec_err(got: &Vector, want: &Vector) -> f64 {
    (got - want).norm() / want.norm().max(1e-4)
}

fn dense_value(model: &Model, bra: &Mat, ket: &Mat, parts: Option<HParts>) -> Result<f64> {
    let b = oracle::product_state(bra)?;
    let mut k = oracle::product_state(ket)?;
    if let Some(p) = parts {
        k = oracle::dense_apply_h(model, &k, p);
    }
    Ok(oracle::dense_ip_a(&model.space, &b, &k))
}

fn rank_k(r: &mut ChaCha8Rng, n: usize, k: usize) -> Mat {
    rand_mat(r, n, k) * rand_mat(r, k, n)
}

pub fn run_verify(cfg: &RunConfig) -> Result<VerifyReport> {
    let model = Model::build(&cfg.model).map_err(|e| anyhow!("{}", e))?;
    let mtot = model.mtot();
    DenseState::zeros(mtot, 3).map_err(|e| anyhow!("verify refuses this model: {}", e))?;
    let sp = &model.space;
    let tol = cfg.verify.tolerance;
    let cases = cfg.verify.cases;
    let ctx = Asym::new(sp, &model.poisson, cfg.solve.eta_rel);
    let op = Full(&model.one_body);
    let mut r = ChaCha8Rng::seed_from_u64(cfg.solve.seed);

    let mut lowdin = Suite::new("lowdin");
    let mut tv = Suite::new("tv");
    let mut w = Suite::new("w");
    let mut exact_zero = Suite::new("exact_zero");
    let mut delta = Suite::new("delta");
    let mut delta_tv = Suite::new("delta_tv");
    let mut delta_w = Suite::new("delta_w");
    let mut ortho = Suite::new("orthogonality");
    let mut contraction = Suite::new("contraction");
    let mut kernel = Suite::new("normal_kernel");
    let mut rhs = Suite::new("rhs");
    let mut update = Suite::new("rank_one_update");
    let mut det = Suite::new("det_identity");

    for n in [2usize, 3] {
        for q in 0..=n.min(3) {
            if n + q > mtot {
                continue;
            }
            for _ in 0..cases {
                let (bra, ket) = deficient_pair(&mut r, sp, n, q);
                let l = ctx.lowdin(&bra, &ket)?;
                lowdin.record(err(l, dense_value(&model, &bra, &ket, None)?), tol);
                let t = ctx.tv(&bra, &ket, &op)?;
                tv.record(err(t, dense_value(&model, &bra, &ket, Some(HParts::TV))?), tol);
                let v = ctx.w(&bra, &ket)?;
                w.record(err(v, dense_value(&model, &bra, &ket, Some(HParts::W))?), tol);
                if q >= 2 {
                    exact_zero.record(t.abs(), 0.0);
                }
                if q >= 3 {
                    exact_zero.record(v.abs(), 0.0);
                }

                // Delta products carry the deficiency in the tail only.
                let (bra, ket) = deficient_pair(&mut r, sp, n, q.min(n - 1));
                let slot = r.random_range(0..n);
                let tail = bra.clone().remove_column(slot);
                let d = ctx.delta(&tail, slot, &ket)?;
                delta.record(vec_err(&d, &oracle::dense_delta_ip(&model, &tail, slot, &ket, None)?), tol);
                let dtv = ctx.delta_tv(&tail, slot, &ket, &op)?;
                delta_tv.record(vec_err(&dtv, &oracle::dense_delta_ip(&model, &tail, slot, &ket, Some(HParts::TV))?), tol);
                let dw = ctx.delta_w(&tail, slot, &ket)?;
                delta_w.record(vec_err(&dw, &oracle::dense_delta_ip(&model, &tail, slot, &ket, Some(HParts::W))?), tol);
                for i in 0..n - 1 {
                    let o = weighted_dot(sp, &d, &tail.column(i).into_owned()).abs() / d.norm().max(1.0);
                    ortho.record(o, tol * 1e-2);
                }
                let g = rand_vec(&mut r, mtot);
                let mut full = bra.clone();
                full.set_column(slot, &g);
                contraction.record(err(weighted_dot(sp, &d, &g), ctx.lowdin(&full, &ket)?), tol);
                contraction.record(err(weighted_dot(sp, &dtv, &g), ctx.tv(&full, &ket, &op)?), tol);
                contraction.record(err(weighted_dot(sp, &dw, &g), ctx.w(&full, &ket)?), tol);

                // Normal kernel of a two-term state whose cross overlap is deficient.
                if q < n {
                    let k = r.random_range(0..n);
                    let (b2, k2) = deficient_pair(&mut r, sp, n - 1, q);
                    let mut o0 = rand_mat(&mut r, mtot, n);
                    let mut o1 = rand_mat(&mut r, mtot, n);
                    for (c, i) in (0..n).filter(|&i| i != k).enumerate() {
                        o0.set_column(i, &b2.column(c));
                        o1.set_column(i, &k2.column(c));
                    }
                    let psi = SeparatedWavefunction::new(vec![SlaterTerm::new(1.3, o0), SlaterTerm::new(-0.7, o1)])?;
                    let kern = build_normal_matrix(sp, &psi, k, cfg.solve.eta_rel)?;
                    let x = rand_mat(&mut r, mtot, 2);
                    let got = apply_normal(&kern, &x);
                    for (l, tl) in psi.terms.iter().enumerate() {
                        let tail = rest(&tl.orbitals, k);
                        let mut want = Vector::zeros(mtot);
                        for (lp, tp) in psi.terms.iter().enumerate() {
                            let mut kt = tp.orbitals.clone();
                            kt.set_column(k, &x.column(lp));
                            want += ctx.delta(&tail, k, &kt)? * (tl.coef * tp.coef);
                        }
                        kernel.record(vec_err(&got.column(l).into_owned(), &want), tol);
                    }
                }
            }
        }
    }

    // Right-hand side against the dense resolvent, N = 2.
    let es = build_expsum(1e-10, 1e8)?;
    let mu = -1.0;
    if let Ok(rep) = build_greens(&es, mu, &model.one_body, 2) {
        for _ in 0..cases {
            let make = |r: &mut ChaCha8Rng| SeparatedWavefunction::new((0..2).map(|_| SlaterTerm::new(1.0, rand_mat(r, mtot, 2))).collect());
            let psi = make(&mut r)?;
            let pt = make(&mut r)?;
            let target = oracle::antisymmetrize(&oracle::dense_target(&model, &psi, mu)?);
            let k = r.random_range(0..2);
            let b = build_rhs(&ctx, &model.one_body, &pt, &psi, &rep, k)?;
            for l in 0..2 {
                let want = oracle::dense_delta_contract(sp, &rest(&pt.terms[l].orbitals, k), k, &target) * pt.terms[l].coef;
                rhs.record(vec_err(&b.column(l).into_owned(), &want), tol);
            }
        }
    }

    let kinds = [UpdateCase::RankDrop, UpdateCase::ShermanMorrison, UpdateCase::RowSpaceOnly, UpdateCase::ColumnSpaceOnly, UpdateCase::RankGain];
    for kind in kinds {
        for _ in 0..cases {
            let n = r.random_range(3..8);
            let k = match kind {
                UpdateCase::ShermanMorrison => n,
                _ => r.random_range(2..n),
            };
            let a = rank_k(&mut r, n, k);
            let x = rand_vec(&mut r, n);
            let y = rand_vec(&mut r, n);
            let (b, c) = match kind {
                UpdateCase::RankDrop => (&a * &x, -a.tr_mul(&y) / y.dot(&(&a * &x))),
                UpdateCase::ShermanMorrison => (&a * &x, a.tr_mul(&y)),
                UpdateCase::RowSpaceOnly => (&a * &x, rand_vec(&mut r, n)),
                UpdateCase::ColumnSpaceOnly => (rand_vec(&mut r, n), a.tr_mul(&y)),
                UpdateCase::RankGain => (rand_vec(&mut r, n), rand_vec(&mut r, n)),
            };
            let p = compute_pseudo(&a, 1e-10)?;
            let res = rank_one_update_factors(&p, &a, &b, &c)?;
            let fresh = compute_pseudo(&(&a + &b * c.transpose()), 1e-10)?;
            let e = if res.bundle.rank_def != fresh.rank_def {
                f64::INFINITY
            } else {
                (&res.bundle.pinv - &fresh.pinv).norm() / fresh.pinv.norm().max(1.0)
            };
            update.record(e, tol);
        }
    }

    for _ in 0..cases {
        let n = r.random_range(1..9);
        let q = r.random_range(1..=n.min(4));
        let u = rand_mat(&mut r, n, q);
        let v = rand_mat(&mut r, n, q);
        let dense = (Mat::identity(n, n) + &u * v.transpose()).determinant();
        det.record((det_perturbed_identity(&u, &v)? - dense).abs() / dense.abs().max(1e-300), tol * 1e-2);
    }

    let ground_energy = oracle::exact_ground(&model, cfg.solve.n).ok().map(|(e, _)| e);
    Ok(VerifyReport {
        suites: vec![lowdin, tv, w, exact_zero, delta, delta_tv, delta_w, ortho, contraction, kernel, rhs, update, det],
        ground_energy,
    })
}
