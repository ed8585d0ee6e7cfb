//! Attention prediction models: a small convolutional encoder with a
//! recurrent cell, three interchangeable conditioning heads, the fine gaze
//! calibration network, and the autodiff and optimizer they train with.

pub mod calibration;
pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod error;
pub mod heads;
pub mod model;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use calibration::{
    calibrate_pipeline, coarse_center, fine_calibrate, CalibrationConfig, CalibrationNet,
    OffsetMode,
};
pub use checkpoint::{load_model, save_model, Checkpoint};
pub use encoder::{Backbone, BackboneRegistry};
pub use config::{
    BackboneKind, CondConvLayerConfig, EncoderConfig, HeadKind, ModelConfig, ModelKind,
    TemporalKind,
};
pub use error::{ModelError, Result};
pub use heads::{
    cond_conv, multi_branch_select, routing_weights, CondConvLayer, ConditioningHead,
    HeadRegistry, HeadSpec,
};
pub use model::{attention_loss, AttentionModel, SequenceBatch};
pub use optim::{Adam, AdamConfig};
pub use params::{Forward, ParamGrads, ParamStore};
pub use tensor::Tensor;
