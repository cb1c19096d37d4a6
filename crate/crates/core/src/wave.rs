//! Slater terms, separated wavefunctions and the overlap matrices behind every
//! antisymmetric inner product.
//!
//! An orbital set is an `Mtot × N` matrix with one orbital per column.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{compute_pseudo_scaled, svd_sorted, Mat, NullPair, PseudoBundle, Vector};
use crate::math::sqrt;
use crate::space::ParticleSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct SlaterTerm {
    pub coef: f64,
    pub orbitals: Mat,
}

impl SlaterTerm {
    pub fn new(coef: f64, orbitals: Mat) -> Self {
        SlaterTerm { coef, orbitals }
    }

    pub fn n(&self) -> usize {
        self.orbitals.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedWavefunction {
    pub terms: Vec<SlaterTerm>,
}

impl SeparatedWavefunction {
    pub fn new(terms: Vec<SlaterTerm>) -> Result<Self> {
        let psi = SeparatedWavefunction { terms };
        psi.validate()?;
        Ok(psi)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.terms.first().ok_or_else(|| Error::Dimension("wavefunction needs at least one term".into()))?;
        let (m, n) = first.orbitals.shape();
        for (l, t) in self.terms.iter().enumerate() {
            if t.orbitals.shape() != (m, n) {
                return Err(Error::Dimension(format!(
                    "term {} has orbital block {:?}, term 0 has {:?}",
                    l,
                    t.orbitals.shape(),
                    (m, n)
                )));
            }
            if !t.coef.is_finite() || t.orbitals.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain(format!("term {} has non-finite entries", l)));
            }
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn n(&self) -> usize {
        self.terms[0].orbitals.ncols()
    }

    pub fn mtot(&self) -> usize {
        self.terms[0].orbitals.nrows()
    }

    pub fn scale(&mut self, c: f64) {
        for t in &mut self.terms {
            t.coef *= c;
        }
    }
}

/// Rescales every orbital to unit norm, moving the norm into the coefficient.
pub fn normalize_orbitals(sp: &ParticleSpace, psi: &mut SeparatedWavefunction) {
    for t in &mut psi.terms {
        for i in 0..t.orbitals.ncols() {
            let col = t.orbitals.column(i).into_owned();
            let nrm = sqrt(crate::space::weighted_dot(sp, &col, &col));
            if nrm > 0.0 {
                t.orbitals.column_mut(i).scale_mut(1.0 / nrm);
                t.coef *= nrm;
            }
        }
    }
}

/// `L(i, j) = ⟨bra_i, ket_j⟩`.
pub fn overlap_matrix(sp: &ParticleSpace, bra: &Mat, ket: &Mat) -> Result<Mat> {
    if bra.ncols() != ket.ncols() {
        return Err(Error::Dimension(format!("{} bra orbitals against {} ket orbitals", bra.ncols(), ket.ncols())));
    }
    overlap_rect(sp, bra, ket)
}

/// Overlaps of two orbital lists of any lengths.
pub fn overlap_rect(sp: &ParticleSpace, bra: &Mat, ket: &Mat) -> Result<Mat> {
    if bra.nrows() != sp.len() || ket.nrows() != sp.len() {
        return Err(Error::Dimension(format!(
            "orbitals of length {} and {} in a space of {}",
            bra.nrows(),
            ket.nrows(),
            sp.len()
        )));
    }
    Ok(weighted(sp, bra).tr_mul(ket))
}

/// Largest weighted orbital norm in the set.
pub fn max_norm(sp: &ParticleSpace, m: &Mat) -> f64 {
    let mut best: f64 = 0.0;
    for j in 0..m.ncols() {
        let c = m.column(j).into_owned();
        best = best.max(crate::space::weighted_dot(sp, &c, &c));
    }
    sqrt(best)
}

pub(crate) fn weighted(sp: &ParticleSpace, m: &Mat) -> Mat {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        col.component_mul_assign(&sp.full_weights);
    }
    out
}

#[derive(Debug, Clone)]
pub struct CoincidenceData {
    /// `L‡ · bra` as a list of orbitals.
    pub theta: Mat,
    pub l: Mat,
    pub bundle: PseudoBundle,
    /// `1/|L‡|`: `|L|` when nonsingular.
    pub det_factor: f64,
}

impl CoincidenceData {
    pub fn rank_def(&self) -> usize {
        self.bundle.rank_def
    }

    pub fn null_pairs(&self) -> &[NullPair] {
        &self.bundle.null_pairs
    }
}

pub fn max_coincidence(sp: &ParticleSpace, bra: &Mat, ket: &Mat, eta_rel: f64) -> Result<CoincidenceData> {
    let l = overlap_matrix(sp, bra, ket)?;
    let scale = max_norm(sp, bra) * max_norm(sp, ket);
    let bundle = compute_pseudo_scaled(&l, eta_rel, scale)?;
    let theta = bra * bundle.modinv.transpose();
    let det_factor = bundle.det_factor();
    Ok(CoincidenceData { theta, l, bundle, det_factor })
}

/// Overlap data for a bra with a delta function in one slot.
#[derive(Debug, Clone)]
pub struct EData {
    /// Row `slot` is `dᵀ`, the rest are `⟨bra_i, ket_j⟩`.
    pub e: Mat,
    pub d: Vector,
    pub bundle: PseudoBundle,
    pub slot: usize,
}

impl EData {
    pub fn rank_def(&self) -> usize {
        self.bundle.rank_def
    }
}

/// Unit vector orthogonal to the rows of `tail` ((N−1)×N): the right singular
/// vector of the smallest singular value.
pub fn orthogonal_direction(tail: &Mat) -> Vector {
    let n = tail.ncols();
    if n == 1 {
        return Vector::from_element(1, 1.0);
    }
    let mut sq = Mat::zeros(n, n);
    sq.rows_mut(0, tail.nrows()).copy_from(tail);
    let sv = svd_sorted(&sq, 0.5);
    sv.v.column(n - 1).into_owned()
}

/// `E` with `d` in row 0 and the tail below (the bra is `[δ; tail]`).
pub fn build_e(sp: &ParticleSpace, bra_tail: &Mat, ket: &Mat, eta_rel: f64) -> Result<EData> {
    build_e_at(sp, bra_tail, ket, 0, eta_rel)
}

/// `E` for a bra whose delta sits at `slot`; `bra_rest` holds the other N−1
/// bra orbitals in their natural order.
pub fn build_e_at(sp: &ParticleSpace, bra_rest: &Mat, ket: &Mat, slot: usize, eta_rel: f64) -> Result<EData> {
    let n = ket.ncols();
    if bra_rest.ncols() + 1 != n || slot >= n {
        return Err(Error::Dimension(format!(
            "{} bra orbitals besides slot {} against {} ket orbitals",
            bra_rest.ncols(),
            slot,
            n
        )));
    }
    let tail = overlap_rect(sp, bra_rest, ket)?;
    let d = orthogonal_direction(&tail);
    let e = assemble_e(&tail, &d, slot);
    let scale = (max_norm(sp, bra_rest) * max_norm(sp, ket)).max(1.0);
    let bundle = compute_pseudo_scaled(&e, eta_rel, scale)?;
    Ok(EData { e, d, bundle, slot })
}

pub(crate) fn assemble_e(tail: &Mat, d: &Vector, slot: usize) -> Mat {
    let n = d.len();
    let mut e = Mat::zeros(n, n);
    let mut r = 0;
    for i in 0..n {
        if i == slot {
            e.set_row(i, &d.transpose());
        } else {
            e.set_row(i, &tail.row(r));
            r += 1;
        }
    }
    e
}

/// The N bra columns with a zero placeholder at `slot`.
pub(crate) fn with_placeholder(bra_rest: &Mat, slot: usize) -> Mat {
    let (m, k) = bra_rest.shape();
    let mut out = Mat::zeros(m, k + 1);
    let mut r = 0;
    for i in 0..=k {
        if i != slot {
            out.set_column(i, &bra_rest.column(r));
            r += 1;
        }
    }
    out
}

/// Löwdin determinant `|L(bra, ket)|`.
pub fn lowdin(sp: &ParticleSpace, bra: &Mat, ket: &Mat) -> Result<f64> {
    Ok(overlap_matrix(sp, bra, ket)?.determinant())
}

/// Antisymmetric pseudo-norm (N! dropped).
pub fn norm_a(sp: &ParticleSpace, psi: &SeparatedWavefunction) -> Result<f64> {
    let sq = norm_a_squared(sp, psi)?;
    if sq < -1e-10 {
        return Err(Error::Consistency(format!("negative squared pseudo-norm {:e}", sq)));
    }
    Ok(sqrt(sq.max(0.0)))
}

pub fn norm_a_squared(sp: &ParticleSpace, psi: &SeparatedWavefunction) -> Result<f64> {
    psi.validate()?;
    let mut acc = 0.0;
    for (l, tl) in psi.terms.iter().enumerate() {
        for (m, tm) in psi.terms.iter().enumerate().skip(l) {
            let v = tl.coef * tm.coef * lowdin(sp, &tl.orbitals, &tm.orbitals)?;
            acc += if m == l { v } else { 2.0 * v };
        }
    }
    Ok(acc)
}

/// `⟨ψ, χ⟩_A`.
pub fn ip_a(sp: &ParticleSpace, psi: &SeparatedWavefunction, chi: &SeparatedWavefunction) -> Result<f64> {
    let mut acc = 0.0;
    for tl in &psi.terms {
        for tm in &chi.terms {
            acc += tl.coef * tm.coef * lowdin(sp, &tl.orbitals, &tm.orbitals)?;
        }
    }
    Ok(acc)
}

/// Text dump: a `detsum-wf v1 N=<N> r=<r> M=<Mtot>` header, then per term an
/// `s=<coef>` line and one line of point values per orbital. Values carry 17
/// significant digits, so a dump reloads bit for bit.
pub fn to_wf_text(psi: &SeparatedWavefunction) -> String {
    let mut out = format!("detsum-wf v1 N={} r={} M={}\n", psi.n(), psi.rank(), psi.mtot());
    for t in &psi.terms {
        out.push_str(&format!("s={:.16e}\n", t.coef));
        for j in 0..t.orbitals.ncols() {
            let line: Vec<String> = t.orbitals.column(j).iter().map(|x| format!("{:.16e}", x)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

fn header_field(tok: Option<&str>, key: &str) -> Result<usize> {
    tok.and_then(|t| t.strip_prefix(key))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse(format!("line 1: expected {}<integer> in the header", key)))
}

fn parse_value(tok: &str, line: usize) -> Result<f64> {
    tok.parse().map_err(|_| Error::Parse(format!("line {}: '{}' is not a number", line, tok)))
}

pub fn from_wf_text(text: &str) -> Result<SeparatedWavefunction> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty wavefunction file".into()))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("detsum-wf") || toks.next() != Some("v1") {
        return Err(Error::Parse("line 1: expected 'detsum-wf v1' header".into()));
    }
    let n = header_field(toks.next(), "N=")?;
    let r = header_field(toks.next(), "r=")?;
    let m = header_field(toks.next(), "M=")?;
    let mut terms = Vec::with_capacity(r);
    for l in 0..r {
        let (ln, sline) = lines.next().ok_or_else(|| Error::Parse(format!("missing coefficient line of term {}", l)))?;
        let coef = sline
            .strip_prefix("s=")
            .ok_or_else(|| Error::Parse(format!("line {}: expected s=<coefficient>", ln)))
            .and_then(|v| parse_value(v, ln))?;
        let mut orbitals = Mat::zeros(m, n);
        for j in 0..n {
            let (ln, row) = lines.next().ok_or_else(|| Error::Parse(format!("missing orbital {} of term {}", j, l)))?;
            let vals = row.split_whitespace().map(|t| parse_value(t, ln)).collect::<Result<Vec<f64>>>()?;
            if vals.len() != m {
                return Err(Error::Parse(format!("line {}: {} values, expected M = {}", ln, vals.len(), m)));
            }
            orbitals.set_column(j, &Vector::from_vec(vals));
        }
        terms.push(SlaterTerm::new(coef, orbitals));
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::Parse(format!("line {}: trailing content after {} terms", ln, r)));
    }
    SeparatedWavefunction::new(terms)
}
