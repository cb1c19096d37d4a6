//! Reuse between consecutive directions of a sweep: `D` and `E` change in one
//! row and one column, so their pseudo-inverse data follow from two rank-one
//! updates, and `Θ̃` and the pair intermediates from the update factors.

use alloc::vec::Vec;

use crate::asym::{Asym, DeltaPrep, DeltaWParts};
use crate::error::{Error, Result};
use crate::greens::GreensRep;
use crate::linalg::{rank_one_update_factors, Mat, PseudoBundle, Vector};
use crate::space::{wp_broadcast, ParticleSpace};
use crate::wave::{orthogonal_direction, overlap_rect, EData, SeparatedWavefunction};

use super::normal::{rest, DEntry};
use super::rhs::RhsEntry;

fn unit(n: usize, i: usize) -> Vector {
    let mut v = Vector::zeros(n);
    v[i] = 1.0;
    v
}

/// Rank-one updates lose about `cond · ε`; past this the fresh path is used.
pub const UPDATE_COND_LIMIT: f64 = 1e4;

fn guard(a: &Mat, b: &PseudoBundle) -> Result<()> {
    let cond = a.amax() * b.pinv.amax() * a.nrows() as f64;
    if cond.is_finite() && cond <= UPDATE_COND_LIMIT {
        Ok(())
    } else {
        Err(Error::Consistency(alloc::format!("update condition estimate {:e}", cond)))
    }
}

fn column_mat(v: &Vector) -> Mat {
    Mat::from_column_slice(v.len(), 1, v.as_slice())
}

/// `D` for direction `k + 1` from `D` for direction `k`, once direction `k`
/// holds its updated orbitals in `psi`.
pub fn update_d(sp: &ParticleSpace, psi: &SeparatedWavefunction, k: usize, l: usize, lp: usize, old: &DEntry) -> Result<DEntry> {
    let dim = old.d.nrows();
    let ek = unit(dim, k);
    let hat_l = column_mat(&psi.terms[l].orbitals.column(k).into_owned());
    let cols_old = rest(&psi.terms[lp].orbitals, k);
    let newrow = overlap_rect(sp, &hat_l, &cols_old)?.row(0).transpose();
    let c1 = newrow - old.d.row(k).transpose();
    let d1 = &old.d + &ek * c1.transpose();
    let b1 = rank_one_update_factors(&old.bundle, &old.d, &ek, &c1)?.bundle;
    guard(&d1, &b1)?;

    let hat_lp = column_mat(&psi.terms[lp].orbitals.column(k).into_owned());
    let rows_new = rest(&psi.terms[l].orbitals, k + 1);
    let newcol = overlap_rect(sp, &rows_new, &hat_lp)?.column(0).into_owned();
    let c2 = newcol - d1.column(k);
    let d2 = &d1 + &c2 * ek.transpose();
    let b2 = rank_one_update_factors(&b1, &d1, &c2, &ek)?.bundle;
    guard(&d2, &b2)?;
    Ok(DEntry { d: d2, bundle: b2 })
}

/// Moves a right-hand-side entry from slot `k` to slot `k + 1`: `E` by two
/// row updates, `Θ̃` by the resulting low-rank correction, and the pair
/// intermediates by the same correction.
#[allow(clippy::too_many_arguments)]
pub fn update_rhs_entry(
    asym: &Asym,
    rep: &GreensRep,
    p: usize,
    orbitals: &Mat,
    ket: &Mat,
    k: usize,
    old: &RhsEntry,
) -> Result<RhsEntry> {
    let sp = asym.space;
    let n = ket.ncols();
    let prep = &old.prep;
    let e_old = &prep.e;
    let fhat = rep.apply(p, &orbitals.column(k).into_owned());
    let newrow = overlap_rect(sp, &column_mat(&fhat), ket)?.row(0).transpose();

    let ek = unit(n, k);
    let c1 = newrow - &e_old.d;
    let e1 = &e_old.e + &ek * c1.transpose();
    let u1 = rank_one_update_factors(&e_old.bundle, &e_old.e, &ek, &c1)?;
    guard(&e1, &u1.bundle)?;

    let tail = e1.clone().remove_row(k + 1);
    let d2 = orthogonal_direction(&tail);
    let ek1 = unit(n, k + 1);
    let c2 = &d2 - e1.row(k + 1).transpose();
    let e2 = &e1 + &ek1 * c2.transpose();
    let u2 = rank_one_update_factors(&u1.bundle, &e1, &ek1, &c2)?;
    guard(&e2, &u2.bundle)?;

    let mut bra = prep.bra.clone();
    let dropped = bra.column(k + 1).into_owned();
    bra.set_column(k, &fhat);
    bra.set_column(k + 1, &Vector::zeros(bra.nrows()));

    let modinv_old = &e_old.bundle.modinv;
    let mut terms: Vec<(Vector, Vector)> = Vec::new();
    terms.push((fhat.clone(), modinv_old.column(k).into_owned()));
    terms.push((-dropped, modinv_old.column(k + 1).into_owned()));
    for (x, y) in u1.modinv_delta.iter().chain(u2.modinv_delta.iter()) {
        terms.push((&bra * y, x.clone()));
    }
    let mut theta = prep.theta.clone();
    for (a, b) in &terms {
        theta += a * b.transpose();
    }

    let bundle: PseudoBundle = u2.bundle;
    let parts = match &old.parts {
        Some(parts) if e_old.rank_def() == 0 && bundle.rank_def == 0 => Some(update_parts(sp, asym, ket, parts, &terms)),
        _ => None,
    };
    let a = ket * &d2;
    let e = EData { e: e2, d: d2, bundle, slot: k + 1 };
    Ok(RhsEntry { prep: DeltaPrep { e, bra, theta, a }, parts })
}

/// `ρ̃` and `Σ_i φ_i W_P[θ̃_i φ_j]` after `Θ̃ ← Θ̃ + Σ_t a_t b_tᵀ`.
fn update_parts(sp: &ParticleSpace, asym: &Asym, ket: &Mat, parts: &DeltaWParts, terms: &[(Vector, Vector)]) -> DeltaWParts {
    let mut rho_w = parts.rho_w.clone();
    let mut combined = parts.combined.clone();
    for (a, b) in terms {
        let pb = ket * b;
        rho_w += wp_broadcast(sp, asym.poisson, &a.component_mul(&pb));
        for j in 0..ket.ncols() {
            let wj = wp_broadcast(sp, asym.poisson, &a.component_mul(&ket.column(j)));
            let upd = pb.component_mul(&wj);
            let mut col = combined.column_mut(j);
            col += upd;
        }
    }
    DeltaWParts { rho_w, combined }
}

/// Largest deviation between two matrices, relative to the larger entry of `b`.
pub fn rel_diff(a: &Mat, b: &Mat) -> f64 {
    let scale = b.amax().max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}

pub fn rel_diff_vec(a: &Vector, b: &Vector) -> f64 {
    let scale = b.amax().max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}

/// Deviation of two pseudo-inverse bundles: modified inverse and `|A‡|`.
pub fn bundle_diff(a: &PseudoBundle, b: &PseudoBundle) -> f64 {
    if a.rank_def != b.rank_def {
        return f64::INFINITY;
    }
    let dm = (a.det_mod - b.det_mod).abs() / b.det_mod.abs().max(f64::MIN_POSITIVE);
    rel_diff(&a.modinv, &b.modinv).max(dm)
}

/// Agreement of the fast path with fresh construction over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FastPathReport {
    pub updates: usize,
    pub fallbacks: usize,
    /// Set only when verification is on.
    pub max_d: f64,
    pub max_e: f64,
    pub max_theta: f64,
    pub max_combined: f64,
}

impl FastPathReport {
    pub fn worst(&self) -> f64 {
        self.max_d.max(self.max_e).max(self.max_theta).max(self.max_combined)
    }
}
