use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Cholesky hit a non-positive pivot; usually the nugget is too small.
    #[error("matrix is not positive definite (pivot {pivot}, value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("sampler failed: {0}")]
    Sampler(String),

    #[error("evaluation failed at {x:?}: {reason}")]
    Evaluation { x: Vec<f64>, reason: String },

    #[error("trajectory diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
