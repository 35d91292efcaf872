use thiserror::Error;

/// Errors produced by the tuning library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("integration produced a non-finite state")]
    IntegrationFailure,

    #[error("path parameter {s} outside [0, {s_max}]")]
    OutOfRange { s: f64, s_max: f64 },

    #[error("invalid track: {0}")]
    InvalidTrack(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cholesky factorization failed after jitter {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("point {index} lies beyond the reference point")]
    BeyondReference { index: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
