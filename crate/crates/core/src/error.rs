use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("duplicate id {0}")]
    DuplicateId(String),

    #[error("insufficient authentic reviews: need {needed}, have {available} (shortfall {shortfall})")]
    Shortfall {
        needed: usize,
        available: usize,
        shortfall: usize,
    },

    #[error(transparent)]
    Tree(#[from] crate::treebank::TreeError),

    #[error(transparent)]
    Pattern(#[from] crate::treequery::PatternError),

    #[error("empty vocabulary for family {0}")]
    EmptyVocabulary(String),

    #[error("feature family {0} is enabled but has no vocabulary")]
    MissingVocabulary(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training data must contain both classes")]
    SingleClass,

    #[error("non-finite objective during training")]
    NonFinite,

    #[error("negative edge coupling lambda = {0}; exact min-cut inference needs lambda >= 0")]
    NegativeCoupling(f64),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
