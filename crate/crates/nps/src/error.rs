//! Crate-wide error type.

use crate::steady::SteadyState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),

    /// Boundary data violated an invariant; every violation is listed.
    #[error("invalid boundary data:\n{}", .0.join("\n"))]
    InvalidBoundary(Vec<String>),

    #[error("boundary trace length mismatch: expected {expected}, got {got}")]
    TraceMismatch { expected: usize, got: usize },

    #[error("{what} failed to converge: residual {residual:.3e} after {iterations} iterations (tol {tol:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    /// Pseudo-time steady solve ran out of time budget; the best state so far
    /// is carried along for inspection.
    #[error("steady solve did not reach tolerance by t = {t_reached}: residual {residual:.3e}")]
    SteadyNonConvergence {
        residual: f64,
        t_reached: f64,
        best: Box<SteadyState>,
    },

    #[error("time step too large: dt = {dt:.3e} exceeds stability limit {limit:.3e}")]
    TimeStepTooLarge { dt: f64, limit: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// Config validation failed; every violation is listed.
    #[error("config validation failed:\n{}", .0.join("\n"))]
    ConfigValidation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
