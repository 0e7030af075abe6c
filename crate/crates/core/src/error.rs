use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    InvalidInput(String),

    #[error("{path}: no records")]
    NoRecords { path: PathBuf },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: String,
    },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("bad binary file {path}: {message}")]
    BadFormat { path: PathBuf, message: String },

    #[error("degenerate vector (norm {norm:e}) in {context}")]
    Degenerate { norm: f64, context: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("backend error for request {digest}: {message}")]
    Backend { digest: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn backend(digest: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Backend {
            digest: digest.into(),
            message: message.into(),
        }
    }

    /// True for errors that originate in configuration rather than at run time.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
