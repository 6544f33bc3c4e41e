use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AarmError>;

#[derive(Debug, Error)]
pub enum AarmError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("parse error at {context} line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("no records")]
    NoRecords,

    #[error("invalid record at line {line}: {message}")]
    InvalidRecord { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("embedding file is missing aspects: {}", .0.join(", "))]
    MissingAspects(Vec<String>),

    #[error("degenerate norm {norm:e} for aspect {aspect}")]
    DegenerateNorm { aspect: usize, norm: f64 },

    #[error("unknown user: {0}")]
    UnknownUser(String),

    #[error("unknown item: {0}")]
    UnknownItem(String),

    #[error("user {0} has no unpurchased items to sample")]
    NoNegativeCandidates(usize),

    #[error("non-finite {what} in batch of {batch_size} (first offending example {example})")]
    NonFinite {
        what: &'static str,
        batch_size: usize,
        example: usize,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl AarmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        AarmError::Io {
            path: path.into(),
            source,
        }
    }
}
