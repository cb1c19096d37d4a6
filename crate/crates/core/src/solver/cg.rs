//! Conjugate gradients on the normal equations, plus a dense reference solve.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::math::sqrt;
use crate::space::ParticleSpace;

use super::normal::{apply_normal, block_dot, dense_normal_matrix, NormalKernel};

#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Mat,
    /// `‖r‖ / ‖b‖` at exit (0 when `b = 0`).
    pub residual: f64,
    pub steps: usize,
    /// Residual norms `‖r‖`, starting with the initial one.
    pub history: Vec<f64>,
}

/// Starts from `x0`; stops at `‖r‖ ≤ tol·‖b‖` or after `max_steps`.
pub fn cg_solve(sp: &ParticleSpace, kernel: &NormalKernel, b: &Mat, x0: &Mat, max_steps: usize, tol: f64) -> Result<CgResult> {
    let bnorm = sqrt(block_dot(sp, b, b));
    let mut x = x0.clone();
    let mut r = b - apply_normal(kernel, &x);
    let mut v = r.clone();
    let mut c = block_dot(sp, &r, &r);
    let mut history = Vec::with_capacity(max_steps + 1);
    history.push(sqrt(c));
    let target = tol * bnorm;
    let mut steps = 0;
    while steps < max_steps && sqrt(c) > target {
        let z = apply_normal(kernel, &v);
        let vz = block_dot(sp, &v, &z);
        let vv = block_dot(sp, &v, &v);
        if vz < -1e-12 * vv.max(1.0) {
            return Err(Error::NotSemidefinite(vz / vv.max(f64::MIN_POSITIVE)));
        }
        if vz <= 0.0 {
            // v lies in the nullspace: nothing left to reduce along it.
            break;
        }
        let t = c / vz;
        x += &v * t;
        r -= &z * t;
        let d = block_dot(sp, &r, &r);
        v = &r + &v * (d / c);
        c = d;
        steps += 1;
        history.push(sqrt(c));
    }
    let residual = if bnorm > 0.0 { sqrt(c) / bnorm } else { 0.0 };
    Ok(CgResult { x, residual, steps, history })
}

/// Least-squares solve through the symmetric eigendecomposition of the
/// weight-balanced dense operator; keeps the nullspace part of `x0`.
pub fn dense_solve(sp: &ParticleSpace, kernel: &NormalKernel, b: &Mat, x0: &Mat) -> Result<CgResult> {
    let mtot = sp.len();
    let r = kernel.rank();
    let a = dense_normal_matrix(kernel, mtot);
    let n = r * mtot;
    let sw = Vector::from_fn(n, |i, _| sqrt(sp.full_weights[i % mtot]));
    // W^{1/2} A W^{-1/2} is symmetric because A is self-adjoint in the weighted product.
    let mut s = Mat::from_fn(n, n, |i, j| sw[i] * a[(i, j)] / sw[j]);
    s = (&s + s.transpose()) * 0.5;
    let resid0 = b - apply_normal(kernel, x0);
    let rhs = Vector::from_fn(n, |i, _| sw[i] * resid0[(i % mtot, i / mtot)]);
    let eig = s.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = 1e-12 * lmax.max(f64::MIN_POSITIVE);
    let mut z = Vector::zeros(n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -1e-10 * lmax.max(1.0) {
            return Err(Error::NotSemidefinite(lam));
        }
        if lam > cutoff {
            let q = eig.eigenvectors.column(i);
            z += q * (q.dot(&rhs) / lam);
        }
    }
    let mut x = x0.clone();
    for i in 0..n {
        x[(i % mtot, i / mtot)] += z[i] / sw[i];
    }
    let rf = b - apply_normal(kernel, &x);
    let bnorm = sqrt(block_dot(sp, b, b));
    let rn = sqrt(block_dot(sp, &rf, &rf));
    let residual = if bnorm > 0.0 { rn / bnorm } else { 0.0 };
    Ok(CgResult { x, residual, steps: 1, history: alloc::vec![rn] })
}
