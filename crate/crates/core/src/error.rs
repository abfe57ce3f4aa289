use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every module in the crate.
#[derive(Debug, Error)]
pub enum MinError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid node reference {0}")]
    InvalidNode(usize),

    #[error("input outside its space: {0}")]
    OutOfSpace(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("malformed file {path}: {detail}")]
    Malformed { path: PathBuf, detail: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("config error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl MinError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        MinError::ShapeMismatch { op, detail: detail.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        MinError::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, MinError>;
