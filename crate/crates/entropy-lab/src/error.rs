//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("non-finite value rejected: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("batch of size 1 is invalid in batch-stats mode (variance undefined)")]
    SingletonBatch,

    #[error("stale cache: parameters changed since the forward pass that produced it")]
    StaleCache,

    #[error("pretraining failed: validation accuracy {accuracy:.4} below floor {floor:.4}")]
    PretrainingFailed { accuracy: f64, floor: f64 },

    #[error("snapshot does not match network shape: {0}")]
    SnapshotMismatch(String),

    #[error("undefined score: {0}")]
    UndefinedScore(String),

    #[error("curve fit failed: {0}")]
    FitFailed(String),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), detail: detail.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
