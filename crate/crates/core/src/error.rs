use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = StanceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum StanceError {
    #[error("dataset not found: {dataset} (looked in {path})")]
    DatasetNotFound { dataset: String, path: PathBuf },

    #[error("unknown dataset: {0}")]
    UnknownDataset(String),

    #[error("schema violation in {location}: {reason}")]
    SchemaViolation { location: String, reason: String },

    #[error("duplicate label {dataset}__{name}")]
    DuplicateLabel { dataset: String, name: String },

    #[error("label {0} has no hard group")]
    UnmappedLabel(String),

    #[error("unknown label group: {0}")]
    UnknownGroup(String),

    #[error("no label of the held-out inventory is reachable from group {0}")]
    NoReachableLabel(String),

    #[error("out of vocabulary: {0}")]
    OutOfVocabulary(String),

    #[error("embedding file {path}: {reason}")]
    EmbeddingFormat { path: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported encoder `{0}`: only locally constructed toy encoders are available")]
    UnsupportedEncoder(String),

    #[error("training diverged at epoch {epoch}, step {step} (dataset {dataset}): {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        dataset: String,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl StanceError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        StanceError::InvalidInput(msg.into())
    }

    pub(crate) fn schema(location: impl Into<String>, reason: impl Into<String>) -> Self {
        StanceError::SchemaViolation {
            location: location.into(),
            reason: reason.into(),
        }
    }
}
