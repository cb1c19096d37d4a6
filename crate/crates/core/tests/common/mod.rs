#![allow(dead_code)]

use detsum_core::linalg::{Mat, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_mat(r: &mut ChaCha8Rng, m: usize, n: usize) -> Mat {
    Mat::from_fn(m, n, |_, _| r.random_range(-1.0..1.0))
}

pub fn rand_vec(r: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| r.random_range(-1.0..1.0))
}

/// Random n×n matrix of rank k.
pub fn rank_k(r: &mut ChaCha8Rng, n: usize, k: usize) -> Mat {
    rand_mat(r, n, k) * rand_mat(r, k, n)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn mat_rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

use detsum_core::space::{Model, ModelConfig, ParticleSpace};

/// 1D model with M_s = mtot/2 points and one softened nucleus.
pub fn small_model(mtot: usize) -> Model {
    Model::build(&ModelConfig::atom_1d(mtot / 2, 0.7, 1.0, 0.5)).unwrap()
}

/// `v` minus its weighted projection onto the span of the columns of `basis`.
pub fn perp_to(sp: &ParticleSpace, basis: &Mat, v: &Vector) -> Vector {
    let mut ortho: Vec<Vector> = Vec::new();
    for j in 0..basis.ncols() {
        let mut b = basis.column(j).into_owned();
        for _ in 0..2 {
            for o in &ortho {
                let c = detsum_core::space::weighted_dot(sp, o, &b);
                b.axpy(-c, o, 1.0);
            }
        }
        let nb = detsum_core::space::weighted_dot(sp, &b, &b).sqrt();
        if nb > 1e-10 {
            ortho.push(b / nb);
        }
    }
    let mut out = v.clone();
    for _ in 0..2 {
        for o in &ortho {
            let c = detsum_core::space::weighted_dot(sp, o, &out);
            out.axpy(-c, o, 1.0);
        }
    }
    out
}

/// Random bra/ket pair whose overlap has rank deficiency `q`: the first `q`
/// bra orbitals are orthogonal to the ket span.
pub fn deficient_pair(r: &mut ChaCha8Rng, sp: &ParticleSpace, n: usize, q: usize) -> (Mat, Mat) {
    let m = sp.len();
    let ket = rand_mat(r, m, n);
    let mut bra = rand_mat(r, m, n);
    for i in 0..q.min(n) {
        let v = perp_to(sp, &ket, &bra.column(i).into_owned());
        bra.set_column(i, &v);
    }
    // Shuffle which slots carry the deficiency.
    if n > 1 && r.random_bool(0.5) {
        bra.swap_columns(0, n - 1);
    }
    (bra, ket)
}

/// Relative 1e-8, or absolute 1e-12 when the reference is below 1e-4.
pub fn close(x: f64, y: f64) -> bool {
    let err = (x - y).abs();
    if y.abs() < 1e-4 {
        err <= 1e-12
    } else {
        err <= 1e-8 * y.abs()
    }
}

pub fn vec_close(x: &Vector, y: &Vector, rel_tol: f64) -> bool {
    (x - y).norm() <= rel_tol * y.norm() + 1e-12
}

/// Column `slot` removed.
pub fn without(m: &Mat, slot: usize) -> Mat {
    m.clone().remove_column(slot)
}

/// Strongly bound 1D atom; holds three electrons.
#[allow(dead_code)]
pub fn bound_model(mtot: usize) -> Model {
    Model::build(&ModelConfig::atom_1d(mtot / 2, 0.5, 4.0, 0.3)).unwrap()
}
