//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("complex dimension must be 1 or 2, got {0}")]
    InvalidDimension(usize),

    #[error("grid resolution must be even with {min} <= m <= {max} for n = {n}, got m = {m}")]
    InvalidResolution { n: usize, m: usize, min: usize, max: usize },

    #[error("invalid exponent {got}: {constraint}")]
    InvalidExponent { got: f64, constraint: &'static str },

    #[error("metric plus potential Hessian lost positivity (min eigenvalue {min_eig:.6e})")]
    NotPositive { min_eig: f64 },

    #[error(
        "right-hand side is not band-limited below m/4 \
         (out-of-band energy fraction {fraction:.3e}); pointwise derivative checks need smooth data"
    )]
    RoughInput { fraction: f64 },

    #[error("Moser ladder does not close: needs p0 > 2n, got p0 = {p0} with n = {n}")]
    SubcriticalExponent { p0: f64, n: usize },

    #[error("constraint y <= s violated: y = {y}, s = {s}")]
    ConstraintViolated { y: f64, s: f64 },

    #[error(
        "continuation stage {stage} of {stages} stalled after {steps} Newton steps \
         (sup-norm residual {residual:.3e})"
    )]
    ContinuationStalled { stage: usize, stages: usize, steps: usize, residual: f64 },

    #[error(
        "line search could not keep the minimum eigenvalue above {floor} while \
         decreasing the residual (best trial min eigenvalue {min_eig:.6e})"
    )]
    PositivityLost { floor: f64, min_eig: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolveFailed(String),

    #[error("fields live on different grids ({0} vs {1})")]
    GridMismatch(String, String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
