//! Direct minimization of the Rayleigh quotient by gradient steps on the
//! orbital point values.

use alloc::vec::Vec;

use crate::asym::Asym;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::space::{Full, Model};
use crate::wave::{norm_a_squared, SeparatedWavefunction};

use super::energy::ip_h;
use super::normal::rest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    /// All orbitals move together; backtracking on `t`.
    Full,
    /// One direction at a time with the exact quadratic line search.
    PerDirection,
}

#[derive(Debug, Clone)]
pub struct GradStep {
    pub psi: SeparatedWavefunction,
    pub before: f64,
    pub after: f64,
}

/// `g_j^l` for one direction `j`, every term `l`, at quotient `mu`.
pub fn gradient_direction(model: &Model, psi: &SeparatedWavefunction, j: usize, mu: f64, norm2: f64, eta_rel: f64) -> Result<Vec<Vector>> {
    let asym = Asym::new(&model.space, &model.poisson, eta_rel);
    let op = Full(&model.one_body);
    let n = psi.n();
    let mut out = Vec::with_capacity(psi.rank());
    for tl in &psi.terms {
        let bra = rest(&tl.orbitals, j);
        let mut acc = Vector::zeros(psi.mtot());
        for tm in &psi.terms {
            let prep = asym.prepare_delta(&bra, j, &tm.orbitals)?;
            let mut q = asym.delta_tv_from(&prep, &tm.orbitals, &op)?;
            if n >= 2 {
                q += asym.delta_w_from(&prep, &tm.orbitals)?;
            }
            q -= asym.delta_from(&prep) * mu;
            acc += q * tm.coef;
        }
        out.push(acc * (2.0 * tl.coef / norm2));
    }
    Ok(out)
}

/// Gradient of the Rayleigh quotient: one `M × N` matrix per term, and the
/// quotient itself. The derivative with respect to the point value
/// `φ_j^l(γ)` is `w_γ g_j^l(γ)`.
pub fn gradient(model: &Model, psi: &SeparatedWavefunction, eta_rel: f64) -> Result<(f64, Vec<Mat>)> {
    let (mu, norm2) = quotient_parts(model, psi, eta_rel)?;
    let n = psi.n();
    let mut g: Vec<Mat> = psi.terms.iter().map(|t| Mat::zeros(t.orbitals.nrows(), n)).collect();
    for j in 0..n {
        let gj = gradient_direction(model, psi, j, mu, norm2, eta_rel)?;
        for (l, v) in gj.into_iter().enumerate() {
            g[l].set_column(j, &v);
        }
    }
    Ok((mu, g))
}

fn quotient_parts(model: &Model, psi: &SeparatedWavefunction, eta_rel: f64) -> Result<(f64, f64)> {
    let asym = Asym::new(&model.space, &model.poisson, eta_rel);
    let norm2 = norm_a_squared(&model.space, psi)?;
    if !(norm2 > 0.0) {
        return Err(Error::DegenerateWavefunction);
    }
    Ok((ip_h(&asym, &model.one_body, psi, psi)? / norm2, norm2))
}

fn quotient(model: &Model, psi: &SeparatedWavefunction, eta_rel: f64) -> Option<f64> {
    quotient_parts(model, psi, eta_rel).ok().map(|q| q.0)
}

/// Minimizer of `(a − 2bt + ct²)/(d − 2et + ft²)` among the stationary points
/// with a positive denominator, if any.
pub fn quadratic_line_min(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Option<f64> {
    let qa = b * f - c * e;
    let qb = c * d - a * f;
    let qc = a * e - b * d;
    let mut roots = Vec::new();
    if qa.abs() > 1e-300 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = crate::math::sqrt(disc);
            let q = -0.5 * (qb + if qb >= 0.0 { sq } else { -sq });
            roots.push(q / qa);
            if q != 0.0 {
                roots.push(qc / q);
            }
        }
    } else if qb.abs() > 1e-300 {
        roots.push(-qc / qb);
    }
    let value = |t: f64| {
        let den = d - 2.0 * e * t + f * t * t;
        if den > 0.0 {
            Some((a - 2.0 * b * t + c * t * t) / den)
        } else {
            None
        }
    };
    let mut best: Option<(f64, f64)> = None;
    for t in roots {
        if let Some(v) = value(t) {
            if v.is_finite() && best.is_none_or(|(_, bv)| v < bv) {
                best = Some((t, v));
            }
        }
    }
    best.map(|(t, _)| t)
}

fn moved(psi: &SeparatedWavefunction, dirs: &[Mat], cols: Option<usize>, t: f64) -> SeparatedWavefunction {
    let mut out = psi.clone();
    for (term, g) in out.terms.iter_mut().zip(dirs) {
        match cols {
            Some(j) => {
                let c = term.orbitals.column(j) - g.column(j) * t;
                term.orbitals.set_column(j, &c);
            }
            None => term.orbitals -= g * t,
        }
    }
    out
}

fn backtrack(model: &Model, psi: &SeparatedWavefunction, dirs: &[Mat], cols: Option<usize>, start: f64, before: f64, eta_rel: f64) -> SeparatedWavefunction {
    let mut t = start;
    for _ in 0..60 {
        let cand = moved(psi, dirs, cols, t);
        if let Some(v) = quotient(model, &cand, eta_rel) {
            if v < before {
                return cand;
            }
        }
        t *= 0.5;
    }
    psi.clone()
}

/// One exact line-search step along the gradient in direction `j`.
pub fn direction_step(model: &Model, psi: &SeparatedWavefunction, j: usize, eta_rel: f64) -> Result<GradStep> {
    let asym = Asym::new(&model.space, &model.poisson, eta_rel);
    let (mu, norm2) = quotient_parts(model, psi, eta_rel)?;
    let gj = gradient_direction(model, psi, j, mu, norm2, eta_rel)?;
    let mut hat = psi.clone();
    let mut dirs = Vec::with_capacity(psi.rank());
    for (term, g) in hat.terms.iter_mut().zip(&gj) {
        term.orbitals.set_column(j, g);
        let mut d = Mat::zeros(term.orbitals.nrows(), term.orbitals.ncols());
        d.set_column(j, g);
        dirs.push(d);
    }
    let ob = &model.one_body;
    let a = mu * norm2;
    let b = ip_h(&asym, ob, &hat, psi)?;
    let c = ip_h(&asym, ob, &hat, &hat)?;
    let d = norm2;
    let e = crate::wave::ip_a(&model.space, psi, &hat)?;
    let f = norm_a_squared(&model.space, &hat)?;
    let next = match quadratic_line_min(a, b, c, d, e, f) {
        Some(t) => {
            let cand = moved(psi, &dirs, Some(j), t);
            match quotient(model, &cand, eta_rel) {
                Some(v) if v <= mu => cand,
                _ => psi.clone(),
            }
        }
        None => {
            let gn = crate::math::sqrt(f.max(0.0) / d);
            backtrack(model, psi, &dirs, Some(j), 1.0 / gn.max(1.0), mu, eta_rel)
        }
    };
    let after = quotient(model, &next, eta_rel).ok_or(Error::DegenerateWavefunction)?;
    Ok(GradStep { psi: next, before: mu, after })
}

pub fn grad_step(model: &Model, psi: &SeparatedWavefunction, mode: GradMode, eta_rel: f64) -> Result<GradStep> {
    match mode {
        GradMode::PerDirection => {
            let before = quotient(model, psi, eta_rel).ok_or(Error::DegenerateWavefunction)?;
            let mut cur = psi.clone();
            let mut after = before;
            for j in 0..psi.n() {
                let s = direction_step(model, &cur, j, eta_rel)?;
                cur = s.psi;
                after = s.after;
            }
            Ok(GradStep { psi: cur, before, after })
        }
        GradMode::Full => {
            let (before, g) = gradient(model, psi, eta_rel)?;
            let gmax = g.iter().map(|m| m.amax()).fold(0.0f64, f64::max);
            let omax = psi.terms.iter().map(|t| t.orbitals.amax()).fold(0.0f64, f64::max);
            let start = if gmax > 0.0 { 0.5 * omax / gmax } else { 0.0 };
            let next = backtrack(model, psi, &g, None, start, before, eta_rel);
            let after = quotient(model, &next, eta_rel).ok_or(Error::DegenerateWavefunction)?;
            Ok(GradStep { psi: next, before, after })
        }
    }
}
