use drivattn_core::{ConditionType, CoreError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("invalid model configuration: {0}")]
    Config(String),

    #[error("input shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("model expects {expected} states but received {actual}")]
    ConditionMismatch {
        expected: String,
        actual: ConditionType,
    },

    #[error("no conditioning head registered under `{0}`")]
    UnknownHead(String),

    #[error("no backbone registered under `{0}`")]
    UnknownBackbone(String),

    #[error("sequence lengths differ: {0} frames vs {1}")]
    LengthMismatch(usize, usize),

    #[error("frame {frame} carries no webcam gaze map")]
    MissingWebcam { frame: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ModelError>;
