use std::path::PathBuf;

use drivattn_core::CoreError;
use drivattn_models::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("not a session file (bad magic bytes)")]
    BadMagic,

    #[error("session format version {found} is not supported (this build reads {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("session file is truncated: {0}")]
    Truncated(String),

    #[error("session data is inconsistent: {0}")]
    Corrupt(String),

    #[error("label `{label}` has {available} sequences, {required} required")]
    InsufficientSequences {
        label: String,
        available: usize,
        required: usize,
    },

    #[error("no sequences for {0}")]
    EmptyGroup(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no predictor registered under `{0}`")]
    UnknownPredictor(String),

    #[error("serialization failed: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_error(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
