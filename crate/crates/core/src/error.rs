use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid covariance at {path}: {reason}")]
    InvalidCovariance { path: String, reason: String },

    #[error("invalid spec at {path}: {reason}")]
    InvalidSpec { path: String, reason: String },

    #[error("degenerate map: {0}")]
    DegenerateMap(&'static str),

    #[error("no in-bounds fixations")]
    EmptyFixations,

    #[error("invalid fixation data: {0}")]
    InvalidFixations(String),

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{0} is undefined for this input")]
    UndefinedMetric(&'static str),

    #[error("guidance index is empty")]
    EmptyDataset,

    #[error("index mismatch: {0}")]
    IndexMismatch(String),

    #[error("invalid arguments: {0}")]
    InvalidArguments(String),

    #[error("empty sequence")]
    EmptySequence,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("embedding failed: {0}")]
    Embedding(String),

    #[error("ingest failed: {failed} of {total} records unreadable")]
    IngestFailed { failed: usize, total: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
