use thiserror::Error;

use crate::solver::SolveResult;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("point outside the half-domain: {0}")]
    Domain(String),

    #[error("parse error in `{field}` at byte {position}: {message}")]
    Parse {
        field: String,
        position: usize,
        message: String,
    },

    #[error("expression is not differentiable at the expansion point: {0}")]
    NonSmooth(String),

    #[error("problem hypotheses violated: {0}")]
    Validation(String),

    #[error("radius {rho} is below the resolution floor {floor}")]
    BelowResolution { rho: f64, floor: f64 },

    #[error("singular point: {0}")]
    Singular(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("linear algebra failure: {0}")]
    Linear(String),

    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        last: Box<SolveResult>,
    },

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
