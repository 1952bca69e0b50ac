use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum LoclError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("ragged row at index {index}: expected {expected} cells, found {found}")]
    RaggedRow {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("empty table")]
    EmptyTable,

    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),

    #[error("column {column:?}: {reason}")]
    Column { column: String, reason: String },

    #[error("missing value in column {column:?} at row {row}")]
    MissingValue { column: String, row: usize },

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("every feature column was dropped")]
    AllFeaturesDropped,

    #[error("label column {0:?} has a single distinct value")]
    SingleClass(String),

    #[error("class {class} has {count} instances, fewer than k = {k}")]
    ClassTooSmall { class: usize, count: usize, k: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("edge list does not form a spanning tree: {0}")]
    NotSpanningTree(String),

    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("fingerprint mismatch for {artifact}: expected {expected}, found {found}")]
    Fingerprint {
        artifact: String,
        expected: String,
        found: String,
    },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, LoclError>;

impl LoclError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LoclError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        LoclError::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LoclError::InvalidArgument(msg.into())
    }
}
