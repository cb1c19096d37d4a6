//! Right-hand side of the normal equations: delta products of the
//! Green's-function-transformed fit against `(V + W)ψ`.

use alloc::vec;
use alloc::vec::Vec;

use crate::asym::{Asym, DeltaPrep, DeltaWParts};
use crate::error::Result;
use crate::greens::GreensRep;
use crate::linalg::{Mat, Vector};
use crate::space::{OneBodyOp, PotentialOnly};
use crate::wave::SeparatedWavefunction;

use super::normal::rest;

/// Retained per-`(l, p, m)` data, reused by the fast path.
#[derive(Debug, Clone)]
pub struct RhsEntry {
    pub prep: DeltaPrep,
    pub parts: Option<DeltaWParts>,
}

/// `cache[l][p·r + m]`.
pub type RhsCache = Vec<Vec<Option<RhsEntry>>>;

pub fn empty_cache(r: usize, terms: usize) -> RhsCache {
    vec![vec![None; terms * r]; r]
}

/// `⟨δ ⊗ bra, (V + W) ket⟩_A` from prepared delta data.
pub fn rhs_term(asym: &Asym, one_body: &OneBodyOp, entry: &mut RhsEntry, ket: &Mat) -> Result<Vector> {
    let mut q = asym.delta_tv_from(&entry.prep, ket, &PotentialOnly(one_body))?;
    if ket.ncols() >= 2 {
        if entry.prep.e.rank_def() == 0 {
            if entry.parts.is_none() {
                entry.parts = Some(asym.delta_w_parts(&entry.prep, ket));
            }
            q += asym.delta_w_with_parts(&entry.prep, ket, entry.parts.as_ref().unwrap())?;
        } else {
            q += asym.delta_w_from(&entry.prep, ket)?;
        }
    }
    Ok(q)
}

/// `b(l) = −s̃_l Σ_p F^p[Σ_m s_m ⟨δ ⊗ F^p rest_l, (V + W) Φ^m⟩_A]`.
pub fn build_rhs(asym: &Asym, one_body: &OneBodyOp, psi_tilde: &SeparatedWavefunction, psi: &SeparatedWavefunction, rep: &GreensRep, k: usize) -> Result<Mat> {
    let mut cache = empty_cache(psi.rank(), rep.len());
    build_rhs_cached(asym, one_body, psi_tilde, psi, rep, k, &mut cache, false)
}

/// As [`build_rhs`], taking prepared entries from `cache` where present and
/// storing new ones when `keep` is set.
#[allow(clippy::too_many_arguments)]
pub fn build_rhs_cached(
    asym: &Asym,
    one_body: &OneBodyOp,
    psi_tilde: &SeparatedWavefunction,
    psi: &SeparatedWavefunction,
    rep: &GreensRep,
    k: usize,
    cache: &mut RhsCache,
    keep: bool,
) -> Result<Mat> {
    let mtot = psi.mtot();
    let r = psi_tilde.rank();
    let job = |l: usize, slots: &mut Vec<Option<RhsEntry>>| -> Result<Vector> {
        let st = psi_tilde.terms[l].coef;
        if st == 0.0 {
            return Ok(Vector::zeros(mtot));
        }
        rhs_for_term(asym, one_body, &psi_tilde.terms[l].orbitals, psi, rep, k, slots, keep).map(|b| b * -st)
    };

    #[cfg(feature = "parallel")]
    let cols: Vec<Result<Vector>> = {
        use rayon::prelude::*;
        cache.par_iter_mut().enumerate().map(|(l, slots)| job(l, slots)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let cols: Vec<Result<Vector>> = cache.iter_mut().enumerate().map(|(l, slots)| job(l, slots)).collect();

    let mut b = Mat::zeros(mtot, r);
    for (l, c) in cols.into_iter().enumerate() {
        b.set_column(l, &c?);
    }
    Ok(b)
}

#[allow(clippy::too_many_arguments)]
fn rhs_for_term(
    asym: &Asym,
    one_body: &OneBodyOp,
    orbitals: &Mat,
    psi: &SeparatedWavefunction,
    rep: &GreensRep,
    k: usize,
    slots: &mut [Option<RhsEntry>],
    keep: bool,
) -> Result<Vector> {
    let r = psi.rank();
    let tail = rest(orbitals, k);
    let mut out = Vector::zeros(orbitals.nrows());
    for p in 0..rep.len() {
        let mut frest: Option<Mat> = None;
        let mut acc = Vector::zeros(orbitals.nrows());
        for (m, term) in psi.terms.iter().enumerate() {
            let idx = p * r + m;
            let mut entry = match slots[idx].take() {
                Some(e) => e,
                None => {
                    let fr = frest.get_or_insert_with(|| rep.apply_all(p, &tail));
                    RhsEntry { prep: asym.prepare_delta(fr, k, &term.orbitals)?, parts: None }
                }
            };
            acc += rhs_term(asym, one_body, &mut entry, &term.orbitals)? * term.coef;
            if keep {
                slots[idx] = Some(entry);
            }
        }
        out += rep.apply(p, &acc);
    }
    Ok(out)
}
