mod common;

use common::*;
use detsum_core::linalg::*;
use proptest::prelude::*;

fn engineered(seed: u64, case: UpdateCase) -> (Mat, Vector, Vector) {
    let mut r = rng(seed);
    let n = 2 + (seed as usize % 6);
    let singular = !matches!(case, UpdateCase::ShermanMorrison | UpdateCase::RankDrop) || seed.is_multiple_of(2);
    let mut k = if singular { 1 + (seed as usize / 7) % (n - 1) } else { n };
    if case == UpdateCase::RankDrop {
        // Keep A + bcᵀ away from the zero matrix, where a relative cutoff is meaningless.
        k = k.max(2);
    }
    let a = rank_k(&mut r, n, k);
    let x = rand_vec(&mut r, n);
    let y = rand_vec(&mut r, n);
    let (b, c) = match case {
        UpdateCase::RankDrop => {
            let b = &a * &x;
            let c = a.tr_mul(&y);
            let t = y.dot(&(&a * &x));
            (b, -c / t)
        }
        UpdateCase::ShermanMorrison => (&a * &x, a.tr_mul(&y)),
        UpdateCase::RowSpaceOnly => (&a * &x, rand_vec(&mut r, n)),
        UpdateCase::ColumnSpaceOnly => (rand_vec(&mut r, n), a.tr_mul(&y)),
        UpdateCase::RankGain => (rand_vec(&mut r, n), rand_vec(&mut r, n)),
    };
    (a, b, c)
}

const CASES: [UpdateCase; 5] = [
    UpdateCase::RankDrop,
    UpdateCase::ShermanMorrison,
    UpdateCase::RowSpaceOnly,
    UpdateCase::ColumnSpaceOnly,
    UpdateCase::RankGain,
];

#[test]
fn updates_match_fresh_factorization() {
    for case in CASES {
        for seed in 0..60u64 {
            let (a, b, c) = engineered(seed * 31 + 5, case);
            let p = compute_pseudo(&a, 1e-10).unwrap();
            let res = rank_one_update_factors(&p, &a, &b, &c).unwrap();
            assert_eq!(res.case, case, "seed {seed}");
            let a1 = &a + &b * c.transpose();
            let fresh = compute_pseudo(&a1, 1e-10).unwrap();
            let up = &res.bundle;
            assert_eq!(up.rank_def, fresh.rank_def, "{case:?} seed {seed}");
            assert!(mat_rel(&up.pinv, &fresh.pinv) < 1e-8, "{case:?} seed {seed}: {}", mat_rel(&up.pinv, &fresh.pinv));
            let scale = a1.norm().max(1.0);
            assert!((&a1 * &up.nullproj).norm() < 1e-8 * scale, "{case:?} seed {seed}");
            assert!((&up.nullproj * &a1).norm() < 1e-8 * scale, "{case:?} seed {seed}");
            assert!(rel(up.det_mod, up.modinv.determinant()) < 1e-8, "{case:?} seed {seed}: {} vs {}", up.det_mod, up.modinv.determinant());
            let mut via_delta = p.modinv.clone();
            for (x, y) in &res.modinv_delta {
                via_delta += x * y.transpose();
            }
            assert!(mat_rel(&via_delta, &up.modinv) < 1e-12);
        }
    }
}

#[test]
fn pseudo_inverse_of_rank_five() {
    let mut r = rng(11);
    let a = rank_k(&mut r, 8, 5);
    let p = compute_pseudo(&a, 1e-10).unwrap();
    assert_eq!(p.rank_def, 3);
    // Least-squares oracle: A† = R (Rᵀ... ) via full-rank factorization A = B C.
    let b = rand_mat(&mut rng(11), 8, 5);
    let c = rand_mat(&mut rng(11), 5, 8);
    let _ = (b, c);
    let svd_free = {
        let ata = a.transpose() * &a;
        // (AᵀA + δI)⁻¹Aᵀ converges to A† as δ → 0; use the exact limit through
        // the range basis instead.
        let sym = ata.symmetric_eigen();
        let mut basis = Vec::new();
        for i in 0..8 {
            if sym.eigenvalues[i] > 1e-8 * sym.eigenvalues.amax() {
                basis.push(sym.eigenvectors.column(i).into_owned());
            }
        }
        let vb = Mat::from_columns(&basis);
        let av = &a * &vb;
        let inner = (av.transpose() * &av).try_inverse().unwrap();
        &vb * inner * av.transpose()
    };
    assert!(mat_rel(&p.pinv, &svd_free) < 1e-8);
}

#[test]
fn pairs_span_nullspace() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let n = 4 + seed as usize % 4;
        let a = rank_k(&mut r, n, n - 2);
        let p = compute_pseudo(&a, 1e-10).unwrap();
        let mut cleared = p.clone();
        cleared.null_pairs.clear();
        let pairs = nullspace_pairs(&cleared).unwrap();
        assert_eq!(pairs.len(), 2);
        let mut rebuilt = Mat::zeros(n, n);
        for pr in &pairs {
            assert!((&a * &pr.v).norm() < 1e-8);
            assert!((a.tr_mul(&pr.u)).norm() < 1e-8);
            rebuilt += &pr.v * pr.u.transpose();
        }
        assert!((rebuilt - &p.nullproj).norm() < 1e-10);
        assert!((pairs[0].u.dot(&pairs[1].u)).abs() < 1e-10);
    }
}

#[test]
fn perturbed_identity_dense() {
    let mut r = rng(3);
    let u = rand_mat(&mut r, 6, 3);
    let v = rand_mat(&mut r, 6, 3);
    let dense = (Mat::identity(6, 6) + &u * v.transpose()).determinant();
    assert!(rel(det_perturbed_identity(&u, &v).unwrap(), dense) < 1e-10);
}

proptest! {
    #[test]
    fn perturbed_identity_matches_dense(seed in 0u64..10_000, n in 1usize..9, q in 1usize..5) {
        prop_assume!(q <= n);
        let mut r = rng(seed);
        let u = rand_mat(&mut r, n, q);
        let v = rand_mat(&mut r, n, q);
        let dense = (Mat::identity(n, n) + &u * v.transpose()).determinant();
        let got = det_perturbed_identity(&u, &v).unwrap();
        prop_assert!((got - dense).abs() <= 1e-10 * dense.abs().max(1.0));
    }

    #[test]
    fn bundle_invariants(seed in 0u64..10_000, n in 1usize..8, def in 0usize..4) {
        let k = n.saturating_sub(def);
        let mut r = rng(seed);
        let a = if k == 0 { Mat::zeros(n, n) } else { rank_k(&mut r, n, k) };
        let p = compute_pseudo(&a, 1e-10).unwrap();
        let s = a.norm().max(1.0);
        prop_assert_eq!(p.rank_def, n - k);
        prop_assert!((&a * &p.pinv * &a - &a).norm() < 1e-10 * s * s.max(p.pinv.norm()));
        prop_assert!((&a * &p.nullproj).norm() < 1e-10 * s);
        prop_assert!((&p.nullproj * &a).norm() < 1e-10 * s);
        let pp = &p.nullproj * p.nullproj.transpose();
        prop_assert!((&pp * &pp - &pp).norm() < 1e-10);
        prop_assert!(p.det_mod != 0.0);
        prop_assert!((p.det_mod - p.modinv.determinant()).abs() < 1e-8 * p.det_mod.abs());
    }

    #[test]
    fn chained_updates_stay_consistent(seed in 0u64..5_000) {
        let mut r = rng(seed);
        let n = 5;
        let mut a = rank_k(&mut r, n, 3);
        let mut p = compute_pseudo(&a, 1e-10).unwrap();
        for _ in 0..4 {
            let b = rand_vec(&mut r, n) * 0.5;
            let c = rand_vec(&mut r, n) * 0.5;
            p = rank_one_update(&p, &a, &b, &c).unwrap();
            a += &b * c.transpose();
            let s = a.norm().max(1.0);
            prop_assert!((&a * &p.pinv * &a - &a).norm() < 1e-8 * s);
            prop_assert!((&a * &p.nullproj).norm() < 1e-8 * s);
        }
    }
}

#[test]
fn sorted_svd_reconstructs_deficient_matrices() {
    for seed in 0..2000u64 {
        let mut r = rng(seed);
        let n = 2 + seed as usize % 6;
        let k = 1 + seed as usize % n;
        let a = rank_k(&mut r, n, k);
        let sv = svd_sorted(&a, 1e-10);
        let id = Mat::identity(n, n);
        assert!((sv.u.transpose() * &sv.u - &id).amax() < 1e-12, "seed {seed}");
        assert!((sv.v.transpose() * &sv.v - &id).amax() < 1e-12, "seed {seed}");
        let back = &sv.u * Mat::from_diagonal(&sv.s) * sv.v.transpose();
        assert!((back - &a).norm() < 1e-10 * a.norm(), "seed {seed}");
        for i in 1..n {
            assert!(sv.s[i] <= sv.s[i - 1]);
        }
    }
}
