//! ALS normal equations, conjugate gradients and the Green's-function
//! iteration, with a gradient-descent alternative.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub mod cg;
pub mod energy;
pub mod fast;
pub mod gradient;
pub mod iterate;
pub mod normal;
pub mod rhs;

pub use cg::{cg_solve, dense_solve, CgResult};
pub use energy::{ip_h, mu_newton, op_pair, rayleigh};
pub use fast::{update_d, update_rhs_entry, FastPathReport};
pub use gradient::{direction_step, grad_step, gradient, quadratic_line_min, GradMode, GradStep};
pub use iterate::{als_direction_solve, als_sweep, greens_iterate, init, initial_guess, solve, Failure, Outcome};
pub use normal::{apply_normal, build_normal_matrix, dense_normal_matrix, KernelBlock, NormalKernel};
pub use rhs::build_rhs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuRule {
    Newton,
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Lowest levels of `T + V`, two electrons per level.
    Aufbau,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub rank: usize,
    pub n: usize,
    /// Green's-function iterations `I`.
    pub iterations: usize,
    /// CG steps per direction `S`.
    pub cg_steps: usize,
    pub cg_tol: f64,
    pub eps_expsum: f64,
    /// Upper end `R` of the certified exponential-sum interval.
    pub expsum_upper: f64,
    pub eta_rel: f64,
    pub mu_rule: MuRule,
    /// Stop once `|μ_{n+1} − μ_n|` falls to this.
    pub mu_tol: f64,
    pub seed: u64,
    pub fast_path: bool,
    /// Recompute every fast-path artifact freshly and record the deviation.
    pub verify_fast_path: bool,
    /// Solve each direction with a dense eigendecomposition instead of CG.
    pub dense_solve: bool,
    pub init_mode: InitMode,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            rank: 1,
            n: 2,
            iterations: 50,
            cg_steps: 50,
            cg_tol: 1e-10,
            eps_expsum: 1e-6,
            expsum_upper: 1e8,
            eta_rel: crate::linalg::DEFAULT_ETA_REL,
            mu_rule: MuRule::Rayleigh,
            mu_tol: 1e-9,
            seed: 1,
            fast_path: false,
            verify_fast_path: false,
            dense_solve: false,
            init_mode: InitMode::Aufbau,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank < 1 || self.n < 1 || self.iterations < 1 || self.cg_steps < 1 {
            return Err(Error::Config(format!(
                "r, N, I and S must all be at least 1 (got r = {}, N = {}, I = {}, S = {})",
                self.rank, self.n, self.iterations, self.cg_steps
            )));
        }
        if !(self.cg_tol >= 0.0) || !(self.mu_tol >= 0.0) {
            return Err(Error::Config("tolerances must be non-negative".into()));
        }
        if !(self.eta_rel > 0.0 && self.eta_rel < 1.0) {
            return Err(Error::Config(format!("eta_rel must lie in (0, 1), got {}", self.eta_rel)));
        }
        Ok(())
    }
}

/// Source of elapsed seconds for the trace.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Always zero; for reproducible traces and `no_std` use.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

#[cfg(feature = "std")]
#[derive(Debug, Clone, Copy)]
pub struct WallClock(std::time::Instant);

#[cfg(feature = "std")]
impl Default for WallClock {
    fn default() -> Self {
        WallClock(std::time::Instant::now())
    }
}

#[cfg(feature = "std")]
impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub mu: f64,
    pub rayleigh: f64,
    pub psi_tilde_norm: f64,
    pub max_cg_residual: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub const HEADER: &'static str = "iter,mu,rayleigh,psiTildeNorm,maxCgResidual,seconds";

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.6}\n",
                r.iter, r.mu, r.rayleigh, r.psi_tilde_norm, r.max_cg_residual, r.seconds
            ));
        }
        s
    }
}
