use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a documented invariant (non-finite value, non-monotone
    /// quantiles, mismatched level sets, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Exact subset enumeration refused for a pool above the supported size.
    #[error("capacity error: {models} models exceeds the exact-enumeration limit of {limit}; use the lomo algorithm instead")]
    Capacity { models: usize, limit: usize },

    /// The empty coalition has no ensemble forecast and therefore no score.
    #[error("no prediction: the empty model subset has no ensemble forecast")]
    NoPrediction,

    #[error("{path}:{row}: {message}")]
    Parse {
        path: PathBuf,
        row: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
