use thiserror::Error;

/// Errors produced by the smoothing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Gram matrix at {n} knots is not numerically positive definite; retry with jitter")]
    NotPositiveDefinite { n: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("no feasible point (max constraint violation {max_violation:.3e})")]
    Infeasible { max_violation: f64 },

    #[error("active-set solver stopped after {iterations} iterations (kkt residual {kkt_residual:.3e})")]
    MaxIterations { iterations: usize, kkt_residual: f64 },

    #[error("refinement budget exhausted at N = {n}")]
    BudgetExhausted { n: usize },

    #[error("sup error {sup_error:.3e} exceeds bound {bound:.3e} at N = {n}; report: {dump}")]
    BoundViolated {
        n: usize,
        sup_error: f64,
        bound: f64,
        dump: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("parse: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
