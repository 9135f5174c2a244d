use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("component {index} must be strictly positive (got {value})")]
    NonPositive { index: usize, value: f64 },

    #[error("non-finite value at component {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numeric prox fallback did not converge (optimality gap {gap:e})")]
    FallbackDidNotConverge { gap: f64 },

    #[error("static solver stopped with KKT residual {residual}")]
    NotConverged { residual: f64 },

    #[error("interior-point solver stopped: {0}")]
    ConicSolver(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("solver protocol violation: {0}")]
    Protocol(String),

    #[error("exact means are not available for problem `{0}`")]
    MissingMeans(String),

    #[error("static program appears infeasible (constraint residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("multiplier estimate diverged (norm {norm:e}); the constraints may admit no bounded multiplier")]
    Divergence { norm: f64 },

    #[error("replay mismatch at slot {slot}: {detail}")]
    ReplayMismatch { slot: usize, detail: String },

    #[error("price trace: {0}")]
    Trace(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}
