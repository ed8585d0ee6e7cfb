use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("map dimensions must be positive, got {height}x{width}")]
    EmptyDimensions { height: usize, width: usize },

    #[error("expected {expected} values for the grid, got {actual}")]
    ValueCount { expected: usize, actual: usize },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("map is not a valid probability grid: {0}")]
    InvalidMap(String),

    #[error("driver state must carry exactly one of intention or distraction")]
    InvalidState,

    #[error("{metric} is undefined for constant maps")]
    UndefinedMetric { metric: &'static str },

    #[error("grid of {cells} cells exceeds the exact transport limit of {limit}")]
    GridTooLarge { cells: usize, limit: usize },

    #[error("dimensions {height}x{width} are not divisible by {factor}")]
    IndivisibleDimensions {
        height: usize,
        width: usize,
        factor: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
