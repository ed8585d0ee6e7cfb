//! Experiment harness: session storage, sequence extraction and splits,
//! training with early stopping, grouped evaluation, and the heatmap and
//! risk-map analyses.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod evaluate;
pub mod experiments;
pub mod predictor;
pub mod sequences;
pub mod session_io;
pub mod train;

pub use analysis::{condition_heatmaps, risk_map, RiskCell, RiskConfig};
pub use error::{HarnessError, Result};
pub use evaluate::{config_hash, evaluate, Evaluation, GroupMetrics, Report};
pub use predictor::{ModelPredictor, OraclePredictor, Predictor, PredictorRegistry, UniformPredictor};
pub use sequences::{
    build_sequences, extract_intersection_sequences, extract_lane_following, make_splits,
    reweighted_sampler, Scenario, SequencePlan, SequenceRef, SplitSpec, Splits,
};
pub use session_io::{load_session, load_session_dir, save_session};
pub use train::{train, EpochRecord, TrainConfig, TrainHistory, TrainSet, Trainable};
