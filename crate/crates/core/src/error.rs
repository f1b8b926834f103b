use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error: {0}")]
    RawIo(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid record {id:?}: {message}")]
    Validation { id: String, message: String },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("missing file header (schema_version / tokenizer_version)")]
    MissingHeader,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("training data must contain both classes")]
    SingleClass,

    #[error("minority class has {minority} samples, need at least {folds} for {folds} folds")]
    TooFewForFolds { minority: usize, folds: usize },

    #[error("unknown id {0:?} in embedding table")]
    MissingEmbedding(String),

    #[error("bad model file: {0}")]
    BadFormat(String),

    #[error("checksum mismatch: file is truncated or corrupt")]
    Checksum,

    #[error("unsupported version {found} (this build reads up to {supported})")]
    Version { found: u32, supported: u32 },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by model files or configuration rather than input data.
    pub fn is_model_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::BadFormat(_)
                | Error::Checksum
                | Error::Version { .. }
                | Error::DimMismatch { .. }
        )
    }
}
