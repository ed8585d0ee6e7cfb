//! Core types and pure operations for driver attention modeling: attention
//! maps, driver states, session records, gaze preprocessing, saliency
//! metrics, integer re-centering and a seeded synthetic scenario generator.

// Negated float comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gaze;
pub mod map;
pub mod metrics;
pub mod preprocess;
pub mod scene;
pub mod session;
pub mod shift;
pub mod state;
pub mod synth;

pub use error::{CoreError, Result};
pub use gaze::{GazeEvent, GazeRecord, GazeSource};
pub use map::{validate_map, AttentionMap, Grid, NORMALIZATION_TOLERANCE};
pub use scene::SceneTensor;
pub use session::{DrivingMode, FrameSample, SessionRecord};
pub use state::{one_hot, ConditionType, Distraction, DriverState, Intention};
