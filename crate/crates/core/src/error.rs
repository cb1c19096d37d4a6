use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("nullspace of dimension {0} requested; at most 3 pairs are supported")]
    UnsupportedDeficiency(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("wavefunction has zero antisymmetric pseudo-norm")]
    DegenerateWavefunction,

    #[error("normal operator is not positive semidefinite: <v, Av> = {0:e}")]
    NotSemidefinite(f64),

    #[error("dense oracle size bound exceeded: {0}")]
    SizeBound(String),

    #[error("exponential sum construction failed: {0}")]
    ExpSum(String),

    #[error("energy shift must be negative, got mu = {0}")]
    NonNegativeMu(f64),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = core::result::Result<T, Error>;
