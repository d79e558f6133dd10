use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}: expected {expected} tab-separated columns, found {found}")]
    MalformedRow { row: usize, expected: String, found: usize },

    #[error("row {row}: unknown label {label:?} for {language}")]
    UnknownLabel {
        row: usize,
        label: String,
        language: String,
    },

    #[error("duplicate record id {id:?} at row {row}")]
    DuplicateId { id: String, row: usize },

    #[error("line {line}: {message}")]
    VectorFormat { line: usize, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("class {0:?} has no training examples")]
    EmptyClass(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("model container: {0}")]
    Container(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
