//! Dense kernels: sorted SVD, the modified pseudo-inverse, low-rank determinant
//! identities and rank-one updates of the pseudo-inverse.

use alloc::format;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::sqrt;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative singular-value cutoff.
pub const DEFAULT_ETA_REL: f64 = 1e-10;

static BORDERLINE: AtomicUsize = AtomicUsize::new(0);

/// Number of factorizations so far with a singular value within a factor 10 of
/// the cutoff. Such cases are dispatched by the cutoff alone, which may be the
/// wrong call.
pub fn borderline_count() -> usize {
    BORDERLINE.load(Ordering::Relaxed)
}

fn note_borderline() {
    BORDERLINE.fetch_add(1, Ordering::Relaxed);
}

#[derive(Debug, Clone)]
pub struct SvdBundle {
    pub u: Mat,
    /// Non-increasing.
    pub s: Vector,
    pub v: Mat,
    pub eta_abs: f64,
}

/// SVD of a square matrix with descending singular values and the sign
/// convention applied to each pair.
pub fn svd_sorted(a: &Mat, eta_rel: f64) -> SvdBundle {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "svd_sorted needs a square matrix");
    if n == 0 {
        return SvdBundle { u: Mat::zeros(0, 0), s: Vector::zeros(0), v: Mat::zeros(0, 0), eta_abs: 0.0 };
    }
    let (u0, sv0, v0) = jacobi_svd(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sv0[j].partial_cmp(&sv0[i]).unwrap_or(core::cmp::Ordering::Equal));
    let mut u = Mat::zeros(n, n);
    let mut v = Mat::zeros(n, n);
    let mut s = Vector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = sv0[src];
        let mut uc = u0.column(src).into_owned();
        let mut vc = v0.column(src).into_owned();
        if sign_flip(&vc) {
            uc = -uc;
            vc = -vc;
        }
        u.set_column(dst, &uc);
        v.set_column(dst, &vc);
    }
    let eta_abs = eta_rel * s[0];
    reorient_null(SvdBundle { u, s, v, eta_abs })
}

/// Null pairs are not tied by `A v = s u`, so their `u` is oriented on its
/// own: `u·v > 0`, else the largest entry positive.
fn reorient_null(mut sv: SvdBundle) -> SvdBundle {
    for i in 0..sv.s.len() {
        if sv.s[i] <= sv.eta_abs {
            let vc = sv.v.column(i).into_owned();
            let uc = sv.u.column(i).into_owned();
            let overlap = uc.dot(&vc);
            let flip = if overlap.abs() > 1e-12 { overlap < 0.0 } else { sign_flip(&uc) };
            if flip {
                sv.u.set_column(i, &(-uc));
            }
        }
    }
    sv
}

/// One-sided (Hestenes) Jacobi SVD, unsorted. Left vectors belonging to
/// negligible singular values are completed to an orthonormal basis.
fn jacobi_svd(a: &Mat) -> (Mat, Vector, Mat) {
    let n = a.nrows();
    let mut w = a.clone();
    let mut v = Mat::identity(n, n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= 1e-15 * sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                for m in [&mut w, &mut v] {
                    for i in 0..n {
                        let xp = m[(i, p)];
                        let xq = m[(i, q)];
                        m[(i, p)] = c * xp - s * xq;
                        m[(i, q)] = s * xp + c * xq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sv = Vector::from_fn(n, |i, _| w.column(i).norm());
    let smax = sv.max();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap_or(core::cmp::Ordering::Equal));
    let mut u = Mat::zeros(n, n);
    let mut done: Vec<Vector> = Vec::with_capacity(n);
    let negligible = (n as f64) * f64::EPSILON * smax;
    for &i in &idx {
        let mut col = if sv[i] > negligible { w.column(i) / sv[i] } else { Vector::zeros(n) };
        orthonormalize(&mut col, &done);
        if col.norm() < 0.5 {
            for k in 0..n {
                let mut e = Vector::zeros(n);
                e[k] = 1.0;
                orthonormalize(&mut e, &done);
                if e.norm() > 0.5 {
                    col = e;
                    break;
                }
            }
        }
        u.set_column(i, &col);
        done.push(col);
    }
    (u, sv, v)
}

/// Two passes of Gram–Schmidt against `basis`, then normalize when not tiny.
fn orthonormalize(x: &mut Vector, basis: &[Vector]) {
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(x);
            x.axpy(-c, b, 1.0);
        }
    }
    let nx = x.norm();
    if nx > 1e-8 {
        *x /= nx;
    } else {
        x.fill(0.0);
    }
}

/// True when the largest-magnitude entry (first one on ties) is negative.
fn sign_flip(v: &Vector) -> bool {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() * (1.0 + 1e-12) {
            best = i;
        }
    }
    !v.is_empty() && v[best] < 0.0
}

fn canonical_sign(u: &mut Vector, v: &mut Vector) {
    if sign_flip(v) {
        u.neg_mut();
        v.neg_mut();
    }
}

/// A left/right singular pair of the numerical nullspace: `A v = 0`, `Aᵀ u = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NullPair {
    pub u: Vector,
    pub v: Vector,
}

#[derive(Debug, Clone)]
pub struct PseudoBundle {
    pub pinv: Mat,
    /// `Σ v_i u_iᵀ` over the null pairs.
    pub nullproj: Mat,
    /// `pinv + nullproj`.
    pub modinv: Mat,
    /// Determinant of `modinv`; never zero.
    pub det_mod: f64,
    pub rank_def: usize,
    /// Present when `rank_def ≤ 3`, ordered by ascending singular value.
    pub null_pairs: Vec<NullPair>,
    pub eta_rel: f64,
    pub eta_abs: f64,
}

impl PseudoBundle {
    pub fn dim(&self) -> usize {
        self.pinv.nrows()
    }

    /// Determinant of the original matrix (zero when deficient).
    pub fn det(&self) -> f64 {
        if self.rank_def == 0 {
            1.0 / self.det_mod
        } else {
            0.0
        }
    }

    /// `1/|A‡|`: the determinant when nonsingular, the adjugate scale otherwise.
    pub fn det_factor(&self) -> f64 {
        1.0 / self.det_mod
    }
}

/// `|I + U Vᵀ|` through the Q×Q determinant of `I + Vᵀ U`.
pub fn det_perturbed_identity(u: &Mat, v: &Mat) -> Result<f64> {
    if u.shape() != v.shape() {
        return Err(Error::Dimension(format!("U is {:?} but V is {:?}", u.shape(), v.shape())));
    }
    let q = u.ncols();
    if q > u.nrows() {
        return Err(Error::Dimension(format!("Q = {} exceeds N = {}", q, u.nrows())));
    }
    let small = Mat::identity(q, q) + v.transpose() * u;
    Ok(small.determinant())
}

pub fn compute_pseudo(a: &Mat, eta_rel: f64) -> Result<PseudoBundle> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension(format!("compute_pseudo needs a square matrix, got {}x{}", n, a.ncols())));
    }
    if !(eta_rel > 0.0 && eta_rel < 1.0) {
        return Err(Error::Config(format!("eta_rel must lie in (0, 1), got {}", eta_rel)));
    }
    let sv = svd_sorted(a, eta_rel);
    Ok(bundle_from_svd(&sv, eta_rel))
}

/// As [`compute_pseudo`], with the cutoff taken relative to
/// `max(s_max, scale)`. Overlap matrices pass the product of orbital norms so
/// that a matrix made entirely of roundoff counts as zero.
pub fn compute_pseudo_scaled(a: &Mat, eta_rel: f64, scale: f64) -> Result<PseudoBundle> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension(format!("compute_pseudo needs a square matrix, got {}x{}", n, a.ncols())));
    }
    if !(eta_rel > 0.0 && eta_rel < 1.0) {
        return Err(Error::Config(format!("eta_rel must lie in (0, 1), got {}", eta_rel)));
    }
    let mut sv = svd_sorted(a, eta_rel);
    if n > 0 && scale > sv.s[0] {
        sv.eta_abs = eta_rel * scale;
        sv = reorient_null(sv);
    }
    Ok(bundle_from_svd(&sv, eta_rel))
}

fn bundle_from_svd(sv: &SvdBundle, eta_rel: f64) -> PseudoBundle {
    let n = sv.s.len();
    let eta = sv.eta_abs;
    let mut pinv = Mat::zeros(n, n);
    let mut nullproj = Mat::zeros(n, n);
    let mut prod_s = 1.0;
    let mut pairs = Vec::new();
    let mut q = 0;
    for i in 0..n {
        let s = sv.s[i];
        if s > 0.0 && s <= 10.0 * eta && s * 10.0 >= eta {
            note_borderline();
        }
        let ui = sv.u.column(i);
        let vi = sv.v.column(i);
        if s <= eta {
            q += 1;
            nullproj += vi * ui.transpose();
        } else {
            pinv += (vi * ui.transpose()) / s;
            prod_s *= s;
        }
    }
    for i in (n - q..n).rev() {
        if q <= 3 {
            pairs.push(NullPair { u: sv.u.column(i).into_owned(), v: sv.v.column(i).into_owned() });
        }
    }
    let det_uv = if n == 0 { 1.0 } else { sv.u.determinant() * sv.v.determinant() };
    let det_mod = 1.0 / (det_uv * prod_s);
    let modinv = &pinv + &nullproj;
    PseudoBundle { pinv, nullproj, modinv, det_mod, rank_def: q, null_pairs: pairs, eta_rel, eta_abs: eta }
}

/// Which branch of the rank-one update applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateCase {
    /// f = g = 0, λ = 0: rank drops by one.
    RankDrop,
    /// f = g = 0, λ ≠ 0: Sherman–Morrison.
    ShermanMorrison,
    /// f = 0, g ≠ 0.
    RowSpaceOnly,
    /// f ≠ 0, g = 0.
    ColumnSpaceOnly,
    /// f ≠ 0, g ≠ 0: rank grows by one.
    RankGain,
}

#[derive(Debug, Clone)]
pub struct RankOneResult {
    pub bundle: PseudoBundle,
    pub case: UpdateCase,
    /// `modinv₁ − modinv = Σ x yᵀ` over these pairs.
    pub modinv_delta: Vec<(Vector, Vector)>,
}

/// Pseudo-inverse data of `A + b cᵀ` from that of `A`, in O(N²).
pub fn rank_one_update(p: &PseudoBundle, a: &Mat, b: &Vector, c: &Vector) -> Result<PseudoBundle> {
    rank_one_update_factors(p, a, b, c).map(|r| r.bundle)
}

pub fn rank_one_update_factors(p: &PseudoBundle, a: &Mat, b: &Vector, c: &Vector) -> Result<RankOneResult> {
    let n = p.dim();
    if a.shape() != (n, n) || b.len() != n || c.len() != n {
        return Err(Error::Dimension(format!(
            "bundle of size {} with A {:?}, b {}, c {}",
            n,
            a.shape(),
            b.len(),
            c.len()
        )));
    }
    check_consistent(p, a)?;

    let pinv = &p.pinv;
    let aperp = &p.nullproj;
    let d = pinv * b;
    let e = pinv.tr_mul(c);
    // Projections onto the left and right nullspaces, taken through the null
    // pairs so that a full-rank bundle gives exact zeros.
    let f = aperp.tr_mul(&(aperp * b));
    let g = aperp * aperp.tr_mul(c);
    let lambda = 1.0 + c.dot(&d);
    let dd = d.norm_squared();
    let ee = e.norm_squared();
    let ff = f.norm_squared();
    let gg = g.norm_squared();

    let tol = if p.eta_abs > 0.0 {
        p.eta_abs
    } else {
        p.eta_rel * (b.norm() * c.norm()).max(f64::MIN_POSITIVE)
    };
    let f_zero = sqrt(ff) <= tol;
    let g_zero = sqrt(gg) <= tol;
    let sgn = if lambda < 0.0 { -1.0 } else { 1.0 };
    let alam = lambda.abs();

    let mut dp: Vec<(Vector, Vector)> = Vec::new();
    let mut dn: Vec<(Vector, Vector)> = Vec::new();
    let mut aperp_base = aperp.clone();
    let det_mod;
    let rank_def;
    let case;

    if f_zero && g_zero {
        if alam <= tol {
            case = UpdateCase::RankDrop;
            // d and e are nonzero here: λ = 0 forces cᵀA†b = −1.
            let atd = pinv.tr_mul(&d);
            let ape = pinv * &e;
            dp.push((-&d / dd, atd));
            let coef = d.dot(&ape) / dd;
            dp.push(((-ape + &d * coef) / ee, e.clone()));
            let s = 1.0 / sqrt(dd * ee);
            dn.push((&d * s, e.clone()));
            det_mod = -p.det_mod / sqrt(dd * ee);
            rank_def = p.rank_def + 1;
        } else {
            case = UpdateCase::ShermanMorrison;
            dp.push((-&d / lambda, e.clone()));
            det_mod = p.det_mod / lambda;
            rank_def = p.rank_def;
        }
    } else if f_zero {
        case = UpdateCase::RowSpaceOnly;
        let mu = lambda * lambda + dd * gg;
        let rmu = sqrt(mu);
        let atd = pinv.tr_mul(&d);
        dp.push((-&d / mu, &atd * gg + &e * lambda));
        dp.push((&g / mu, -&e * dd + &atd * lambda));
        let c1 = (rmu - alam) / (gg * rmu);
        let c2 = sgn / rmu;
        let apg = aperp.tr_mul(&g);
        dn.push((-(&g * c1 + &d * c2), apg));
        det_mod = p.det_mod * sgn / rmu;
        rank_def = p.rank_def;
    } else if g_zero {
        case = UpdateCase::ColumnSpaceOnly;
        let nu = lambda * lambda + ee * ff;
        let rnu = sqrt(nu);
        let ape = pinv * &e;
        dp.push((-(&ape * ff + &d * lambda) / nu, e.clone()));
        dp.push(((-&d * ee + &ape * lambda) / nu, f.clone()));
        let c1 = (rnu - alam) / (ff * rnu);
        let c2 = sgn / rnu;
        let apf = aperp * &f;
        dn.push((-apf, &f * c1 + &e * c2));
        det_mod = p.det_mod * sgn / rnu;
        rank_def = p.rank_def;
    } else {
        case = UpdateCase::RankGain;
        if p.rank_def == 0 {
            return Err(Error::Precondition("f and g nonzero but the bundle has no nullspace".into()));
        }
        dp.push((-&d / ff, f.clone()));
        dp.push((-&g / gg, e.clone()));
        dp.push((&g * (lambda / (gg * ff)), f.clone()));
        let rf = sqrt(ff);
        let rg = sqrt(gg);
        let fh = &f / rf;
        let gh = &g / rg;
        // The null pairing must send f̂ to ĝ; reflect inside the nullspace if not.
        let w = aperp * &fh;
        let z = &w - &gh;
        let zz = z.norm_squared();
        let mut det0 = p.det_mod;
        if sqrt(zz) > 1e-12 {
            let atz = aperp.tr_mul(&z);
            aperp_base -= (&z * (2.0 / zz)) * atz.transpose();
            det0 = -det0;
            let scale = 2.0 / zz;
            dn.push((-&z * scale, atz));
        }
        dn.push((-&gh, fh.clone()));
        let corr = 1.0 + (1.0 / (gg * ff) - 1.0 / (rg * rf)) * g.dot(&(&aperp_base * &f));
        det_mod = det0 * corr;
        rank_def = p.rank_def - 1;
    }

    let mut pinv1 = pinv.clone();
    for (x, y) in &dp {
        pinv1 += x * y.transpose();
    }
    let mut null1 = aperp.clone();
    for (x, y) in &dn {
        null1 += x * y.transpose();
    }
    let modinv = &pinv1 + &null1;

    let eta_abs = if p.eta_abs > 0.0 { p.eta_abs } else { p.eta_rel * (a + b * c.transpose()).norm() };
    let null_pairs = if rank_def == 0 {
        Vec::new()
    } else if rank_def <= 3 {
        extract_pairs(&null1, rank_def)
    } else {
        Vec::new()
    };
    let mut delta = dp;
    delta.extend(dn);
    Ok(RankOneResult {
        bundle: PseudoBundle {
            pinv: pinv1,
            nullproj: null1,
            modinv,
            det_mod,
            rank_def,
            null_pairs,
            eta_rel: p.eta_rel,
            eta_abs,
        },
        case,
        modinv_delta: delta,
    })
}

/// Cheap probe that the bundle belongs to `a`.
fn check_consistent(p: &PseudoBundle, a: &Mat) -> Result<()> {
    let n = p.dim();
    if n == 0 {
        return Ok(());
    }
    let x = Vector::from_fn(n, |i, _| 1.0 + 0.37 * ((i * 7 + 3) % 11) as f64);
    let ax = a * &x;
    let back = a * (&p.pinv * &ax);
    let scale = a.norm() * x.norm();
    let tol = 1e-7 * scale.max(f64::MIN_POSITIVE);
    let r1 = (&back - &ax).norm();
    let r2 = (a * (&p.nullproj * &x)).norm();
    let r3 = (p.nullproj.tr_mul(&(a.tr_mul(&x)))).norm();
    if r1 > tol || r2 > tol || r3 > tol {
        return Err(Error::Precondition(format!(
            "pseudo-inverse bundle does not match the matrix (residuals {:e}, {:e}, {:e})",
            r1, r2, r3
        )));
    }
    Ok(())
}

/// Pairs `(u_i, v_i)` with `nullproj = Σ v_i u_iᵀ`, by pivoted power iteration
/// with deflation on `nullprojᵀ nullproj`.
pub fn nullspace_pairs(p: &PseudoBundle) -> Result<Vec<NullPair>> {
    if p.rank_def > 3 {
        return Err(Error::UnsupportedDeficiency(p.rank_def));
    }
    if p.null_pairs.len() == p.rank_def {
        return Ok(p.null_pairs.clone());
    }
    Ok(extract_pairs(&p.nullproj, p.rank_def))
}

fn extract_pairs(nullproj: &Mat, q: usize) -> Vec<NullPair> {
    let m = nullproj.tr_mul(nullproj);
    let n = m.nrows();
    let mut us: Vec<Vector> = Vec::with_capacity(q);
    let deflate = |x: &mut Vector, us: &[Vector]| {
        for u in us {
            let c = u.dot(x);
            x.axpy(-c, u, 1.0);
        }
    };
    for _ in 0..q {
        let mut resid = m.clone();
        for u in &us {
            resid -= u * u.transpose();
        }
        let mut best = 0;
        let mut best_norm = -1.0;
        for j in 0..n {
            let cn = resid.column(j).norm();
            if cn > best_norm {
                best_norm = cn;
                best = j;
            }
        }
        let mut x = resid.column(best).into_owned();
        deflate(&mut x, &us);
        for _ in 0..3 {
            let nx = x.norm();
            if nx == 0.0 {
                break;
            }
            x /= nx;
            x = &m * &x;
            deflate(&mut x, &us);
        }
        let nx = x.norm();
        if nx > 0.0 {
            x /= nx;
        }
        us.push(x);
    }
    us.into_iter()
        .map(|u| {
            let mut u = u;
            let mut v = nullproj * &u;
            canonical_sign(&mut u, &mut v);
            NullPair { u, v }
        })
        .collect()
}
