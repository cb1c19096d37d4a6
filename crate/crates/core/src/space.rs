//! Grid × spin single-particle space and the discretized one-body and
//! electron-electron operators.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::math::{powf, sqrt};

pub const SPINS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Nucleus {
    /// Length `dim`.
    pub position: Vec<f64>,
    pub charge: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub points_per_dim: usize,
    pub spacing: f64,
    pub nuclei: Vec<Nucleus>,
    pub softening: f64,
    pub boundary: Boundary,
}

impl ModelConfig {
    /// 1D grid centred on the origin with one nucleus there.
    pub fn atom_1d(points: usize, spacing: f64, charge: f64, softening: f64) -> Self {
        ModelConfig {
            dim: 1,
            points_per_dim: points,
            spacing,
            nuclei: alloc::vec![Nucleus { position: alloc::vec![0.0], charge }],
            softening,
            boundary: Boundary::Dirichlet,
        }
    }
}

/// Quadrature points; γ = s·M_s + j.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSpace {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vector,
    /// Weights repeated over spin, length `Mtot`.
    pub full_weights: Vector,
}

impl ParticleSpace {
    pub fn spatial_len(&self) -> usize {
        self.points.len()
    }

    pub fn len(&self) -> usize {
        SPINS * self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index(&self, j: usize, spin: usize) -> usize {
        spin * self.spatial_len() + j
    }

    pub fn split(&self, gamma: usize) -> (usize, usize) {
        (gamma % self.spatial_len(), gamma / self.spatial_len())
    }

    /// Space with explicit points and weights, for tests and the oracle.
    pub fn from_weights(points: Vec<Vec<f64>>, weights: Vector) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::Dimension(format!("{} points with {} weights", points.len(), weights.len())));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Config("quadrature weights must be positive".into()));
        }
        let dim = points[0].len();
        let ms = points.len();
        let full_weights = Vector::from_fn(SPINS * ms, |g, _| weights[g % ms]);
        Ok(ParticleSpace { dim, points, weights, full_weights })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneBodyOp {
    pub tmat: Mat,
    /// Diagonal of the nuclear potential.
    pub vdiag: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonOp {
    pub pmat: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub space: ParticleSpace,
    pub one_body: OneBodyOp,
    pub poisson: PoissonOp,
}

impl Model {
    pub fn build(cfg: &ModelConfig) -> Result<Self> {
        let (space, one_body, poisson) = build_grid_model(cfg)?;
        Ok(Model { space, one_body, poisson })
    }

    pub fn mtot(&self) -> usize {
        self.space.len()
    }
}

pub fn build_grid_model(cfg: &ModelConfig) -> Result<(ParticleSpace, OneBodyOp, PoissonOp)> {
    if !(1..=3).contains(&cfg.dim) {
        return Err(Error::Config(format!("grid dimension must be 1, 2 or 3, got {}", cfg.dim)));
    }
    if cfg.points_per_dim < 2 {
        return Err(Error::Config(format!("need at least 2 points per dimension, got {}", cfg.points_per_dim)));
    }
    if !(cfg.spacing > 0.0) || !cfg.spacing.is_finite() {
        return Err(Error::Config(format!("grid spacing must be positive, got {}", cfg.spacing)));
    }
    if !(cfg.softening > 0.0) {
        return Err(Error::Config(format!("softening length must be positive, got {}", cfg.softening)));
    }
    for (i, nuc) in cfg.nuclei.iter().enumerate() {
        if nuc.position.len() != cfg.dim {
            return Err(Error::Config(format!("nucleus {} has {} coordinates in a {}D grid", i, nuc.position.len(), cfg.dim)));
        }
        if !(nuc.charge > 0.0) {
            return Err(Error::Config(format!("nucleus {} has non-positive charge {}", i, nuc.charge)));
        }
    }

    let n = cfg.points_per_dim;
    let h = cfg.spacing;
    let d = cfg.dim;
    let ms = n.pow(d as u32);
    let coord = |k: usize| (k as f64 - (n as f64 - 1.0) / 2.0) * h;
    // Multi-index with the last axis fastest.
    let digits = |j: usize| {
        let mut out = [0usize; 3];
        let mut rest = j;
        for axis in (0..d).rev() {
            out[axis] = rest % n;
            rest /= n;
        }
        out
    };
    let points: Vec<Vec<f64>> = (0..ms).map(|j| (0..d).map(|axis| coord(digits(j)[axis])).collect()).collect();
    let weights = Vector::from_element(ms, powf(h, d as f64));
    let space = ParticleSpace::from_weights(points, weights)?;

    let mut tmat = Mat::zeros(ms, ms);
    let c = 0.5 / (h * h);
    for j in 0..ms {
        let dj = digits(j);
        tmat[(j, j)] = 2.0 * c * d as f64;
        let mut stride = 1;
        for axis in (0..d).rev() {
            if dj[axis] + 1 < n {
                tmat[(j, j + stride)] = -c;
                tmat[(j + stride, j)] = -c;
            }
            stride *= n;
        }
    }

    let a2 = cfg.softening * cfg.softening;
    let dist2 = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    let vdiag = Vector::from_fn(ms, |j, _| {
        -cfg.nuclei.iter().map(|nuc| nuc.charge / sqrt(dist2(&space.points[j], &nuc.position) + a2)).sum::<f64>()
    });
    let pmat = Mat::from_fn(ms, ms, |i, j| 1.0 / sqrt(dist2(&space.points[i], &space.points[j]) + a2));

    Ok((space, OneBodyOp { tmat, vdiag }, PoissonOp { pmat }))
}

fn check_len(sp: &ParticleSpace, f: &Vector) -> Result<()> {
    if f.len() != sp.len() {
        return Err(Error::Dimension(format!("orbital has length {}, space has {}", f.len(), sp.len())));
    }
    Ok(())
}

pub fn integrate(sp: &ParticleSpace, f: &Vector) -> Result<f64> {
    check_len(sp, f)?;
    Ok(sp.full_weights.dot(f))
}

pub fn inner(sp: &ParticleSpace, f: &Vector, g: &Vector) -> Result<f64> {
    check_len(sp, f)?;
    check_len(sp, g)?;
    Ok(weighted_dot(sp, f, g))
}

/// Unchecked weighted inner product.
#[inline]
pub fn weighted_dot(sp: &ParticleSpace, f: &Vector, g: &Vector) -> f64 {
    let w = &sp.full_weights;
    let mut acc = 0.0;
    for i in 0..w.len() {
        acc += w[i] * f[i] * g[i];
    }
    acc
}

/// Applies a spatial matrix to both spin channels.
pub fn apply_spatial(m: &Mat, f: &Vector) -> Vector {
    let ms = m.nrows();
    let blocks = nalgebra::DMatrixView::from_slice(f.as_slice(), ms, SPINS);
    let out = m * blocks;
    Vector::from_column_slice(out.as_slice())
}

pub fn apply_tv(sp: &ParticleSpace, op: &OneBodyOp, f: &Vector) -> Result<Vector> {
    check_len(sp, f)?;
    Ok(Full(op).apply(f))
}

/// Spin-summed potential `Σ_j' P(j,j') w_j' f(j',σ')`, length M_s.
pub fn apply_wp(sp: &ParticleSpace, pop: &PoissonOp, f: &Vector) -> Result<Vector> {
    check_len(sp, f)?;
    Ok(wp_spatial(sp, pop, f))
}

pub(crate) fn wp_spatial(sp: &ParticleSpace, pop: &PoissonOp, f: &Vector) -> Vector {
    let ms = sp.spatial_len();
    let dens = Vector::from_fn(ms, |j, _| sp.weights[j] * (f[j] + f[j + ms]));
    &pop.pmat * dens
}

/// `apply_wp` repeated over spin, ready to multiply γ-functions.
pub fn wp_broadcast(sp: &ParticleSpace, pop: &PoissonOp, f: &Vector) -> Vector {
    broadcast(&wp_spatial(sp, pop, f))
}

pub fn broadcast(spatial: &Vector) -> Vector {
    let ms = spatial.len();
    Vector::from_fn(SPINS * ms, |g, _| spatial[g % ms])
}

pub fn delta_vector(sp: &ParticleSpace, gamma: usize) -> Result<Vector> {
    if gamma >= sp.len() {
        return Err(Error::Dimension(format!("index {} outside a space of {}", gamma, sp.len())));
    }
    let mut v = Vector::zeros(sp.len());
    v[gamma] = 1.0 / sp.full_weights[gamma];
    Ok(v)
}

/// A spin-diagonal one-body operator on γ-functions.
pub trait SingleParticleOp {
    fn apply(&self, f: &Vector) -> Vector;
}

/// `T + V`.
#[derive(Debug, Clone, Copy)]
pub struct Full<'a>(pub &'a OneBodyOp);

/// `V` alone.
#[derive(Debug, Clone, Copy)]
pub struct PotentialOnly<'a>(pub &'a OneBodyOp);

/// `T` alone.
#[derive(Debug, Clone, Copy)]
pub struct KineticOnly<'a>(pub &'a OneBodyOp);

/// Arbitrary spatial matrix on both channels.
#[derive(Debug, Clone, Copy)]
pub struct Spatial<'a>(pub &'a Mat);

fn scale_diag(v: &Vector, f: &Vector) -> Vector {
    let ms = v.len();
    Vector::from_fn(f.len(), |g, _| v[g % ms] * f[g])
}

impl SingleParticleOp for Full<'_> {
    fn apply(&self, f: &Vector) -> Vector {
        apply_spatial(&self.0.tmat, f) + scale_diag(&self.0.vdiag, f)
    }
}

impl SingleParticleOp for PotentialOnly<'_> {
    fn apply(&self, f: &Vector) -> Vector {
        scale_diag(&self.0.vdiag, f)
    }
}

impl SingleParticleOp for KineticOnly<'_> {
    fn apply(&self, f: &Vector) -> Vector {
        apply_spatial(&self.0.tmat, f)
    }
}

impl SingleParticleOp for Spatial<'_> {
    fn apply(&self, f: &Vector) -> Vector {
        apply_spatial(self.0, f)
    }
}
