use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid distribution: {0}")]
    InvalidDist(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("statement id {id} out of range for universe of size {n}")]
    OutOfRange { id: usize, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("universe too large for exact posterior: {candidates} candidate supports exceed cap {cap}")]
    PosteriorTooLarge { candidates: f64, cap: usize },

    #[error("corpus is inconsistent with every admissible support: {0}")]
    InconsistentCorpus(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("embedding file: {0}")]
    Embedding(#[from] crate::measures::EmbeddingError),

    #[error("judge: {0}")]
    Judge(#[from] crate::textlab::JudgeError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub(crate) fn check_dims(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch { left, right });
    }
    Ok(())
}
