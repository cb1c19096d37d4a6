//! Exponential-sum approximation of `1/t` and the separated Green's function
//! `(T_N − μ)⁻¹ ≈ Σ_p Π_i F^p_i`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::math::{ceil, exp, ln, powf};
use crate::space::{apply_spatial, OneBodyOp};

/// Points in the certificate grid.
pub const CERTIFICATE_POINTS: usize = 2000;

/// `1/t ≈ Σ_p w_p exp(−τ_p t)` on `[1, valid_upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSum {
    /// `(w_p, τ_p)`, both positive, τ ascending.
    pub terms: Vec<(f64, f64)>,
    pub eps: f64,
    pub valid_upper: f64,
}

impl ExpSum {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|&(w, tau)| w * exp(-tau * t)).sum()
    }

    /// Largest `|1 − t·S(t)|` over the log-spaced certificate grid on `[1, R]`.
    pub fn certificate(&self) -> f64 {
        certificate_error(&self.terms, self.valid_upper)
    }
}

fn certificate_error(terms: &[(f64, f64)], upper: f64) -> f64 {
    let lr = ln(upper);
    let mut worst: f64 = 0.0;
    for k in 0..CERTIFICATE_POINTS {
        let t = if upper > 1.0 { exp(lr * k as f64 / (CERTIFICATE_POINTS - 1) as f64) } else { 1.0 };
        let s: f64 = terms.iter().map(|&(w, tau)| w * exp(-tau * t)).sum();
        worst = worst.max((1.0 - t * s).abs());
    }
    worst
}

/// Longest sum `build_expsum` will return: `4 (ln 1/eps)²`, but never below
/// `MIN_LENGTH_CAP`, since the log-squared bound tends to zero as `eps → 1`.
pub fn length_cap(eps: f64) -> f64 {
    (4.0 * powf(ln(1.0 / eps), 2.0)).max(MIN_LENGTH_CAP)
}

pub const MIN_LENGTH_CAP: f64 = 10.0;

/// Trapezoid rule on `1/t = ∫ exp(−t eˣ + x) dx`, with step and cut-offs
/// chosen so that discretization and both truncations each contribute at
/// most a third of `eps`. The step is refined until the certificate passes.
pub fn build_expsum(eps: f64, upper: f64) -> Result<ExpSum> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::ExpSum(format!("eps must lie in (0, 1), got {}", eps)));
    }
    if !(upper >= 1.0) || !upper.is_finite() {
        return Err(Error::ExpSum(format!("upper bound R must be finite and at least 1, got {}", upper)));
    }
    let cap = length_cap(eps);
    let third = eps / 3.0;
    let pi2 = core::f64::consts::PI * core::f64::consts::PI;
    let mut h = pi2 / ln(1.0 / third);
    let xmin = ln(third / upper);
    let xmax = ln(ln(1.0 / third));
    let mut last = f64::INFINITY;
    for _attempt in 0..12 {
        let count = ceil((xmax - xmin) / h) as usize + 1;
        if count as f64 > cap {
            return Err(Error::ExpSum(format!(
                "{} terms needed for eps = {:e}, R = {:e}; cap is {:.0} (last certificate {:e})",
                count, eps, upper, cap, last
            )));
        }
        let terms: Vec<(f64, f64)> = (0..count)
            .map(|k| {
                let x = xmin + k as f64 * h;
                (h * exp(x), exp(x))
            })
            .collect();
        let err = certificate_error(&terms, upper);
        if err <= eps {
            return Ok(ExpSum { terms, eps, valid_upper: upper });
        }
        last = err;
        h *= 0.85;
    }
    Err(Error::ExpSum(format!("certificate failed for eps = {:e}, R = {:e}: best error {:e}", eps, upper, last)))
}

/// Per-particle factors of the separated Green's function at shift `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct GreensRep {
    pub mu: f64,
    pub n: usize,
    /// `F^p`, spatial `M_s × M_s`.
    pub fmats: Vec<Mat>,
    /// `c_p^{1/N}`.
    pub scales: Vec<f64>,
}

impl GreensRep {
    pub fn len(&self) -> usize {
        self.fmats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fmats.is_empty()
    }

    /// `F^p` on both spin channels.
    pub fn apply(&self, p: usize, f: &Vector) -> Vector {
        apply_spatial(&self.fmats[p], f)
    }

    /// `F^p` on every column.
    pub fn apply_all(&self, p: usize, m: &Mat) -> Mat {
        let mut out = m.clone();
        for j in 0..m.ncols() {
            out.set_column(j, &self.apply(p, &m.column(j).into_owned()));
        }
        out
    }
}

pub fn apply_f(rep: &GreensRep, p: usize, f: &Vector) -> Result<Vector> {
    if p >= rep.len() {
        return Err(Error::Dimension(format!("term {} of a {}-term Green's function", p, rep.len())));
    }
    if f.len() != 2 * rep.fmats[p].nrows() {
        return Err(Error::Dimension(format!("orbital of length {} for M_s = {}", f.len(), rep.fmats[p].nrows())));
    }
    Ok(rep.apply(p, f))
}

pub fn build_greens(es: &ExpSum, mu: f64, op: &OneBodyOp, n: usize) -> Result<GreensRep> {
    if !(mu < 0.0) {
        return Err(Error::NonNegativeMu(mu));
    }
    if n == 0 {
        return Err(Error::Domain("need at least one particle".into()));
    }
    let eig = op.tmat.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let needed = (n as f64 * lmax - mu) / (-mu);
    if needed > es.valid_upper {
        return Err(Error::Precondition(format!(
            "the shifted kinetic spectrum reaches t = {:.6e} but the exponential sum is certified only up to R = {:.6e}; rebuild with R ≥ {:.6e}",
            needed, es.valid_upper, needed
        )));
    }
    let q = &eig.eigenvectors;
    let mut fmats = Vec::with_capacity(es.len());
    let mut scales = Vec::with_capacity(es.len());
    for &(w, tau) in &es.terms {
        let c = (w / (-mu)) * exp(-tau);
        let scale = powf(c, 1.0 / n as f64);
        let diag = eig.eigenvalues.map(|l| scale * exp(-tau * l / (-mu)));
        let mut qd = q.clone();
        for (j, mut col) in qd.column_iter_mut().enumerate() {
            col *= diag[j];
        }
        fmats.push(qd * q.transpose());
        scales.push(scale);
    }
    Ok(GreensRep { mu, n, fmats, scales })
}
