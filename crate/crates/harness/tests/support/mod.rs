#![allow(dead_code)]

use drivattn_core::synth::{generate_dataset, SynthScenarioConfig};
use drivattn_core::{AttentionMap, ConditionType, DrivingMode, SessionRecord};
use drivattn_models::{EncoderConfig, HeadKind, ModelConfig, ModelKind};

/// 8x16 maps, 64x128 frames, four feature channels.
pub fn tiny_config(kind: HeadKind, condition: Option<ConditionType>) -> ModelConfig {
    let mut cfg = ModelConfig::new(ModelKind::new(kind, condition).unwrap());
    cfg.encoder = EncoderConfig {
        feature_channels: 4,
        stem_channels: 4,
        ..EncoderConfig::default()
    }
    .for_map(8, 16);
    cfg.decoder_channels = 4;
    cfg
}

pub fn small_sessions(condition: ConditionType, n: usize, frames: usize, seed: u64) -> Vec<SessionRecord> {
    let mode = match condition {
        ConditionType::Intention => DrivingMode::Manual,
        ConditionType::Distraction => DrivingMode::Autopilot,
    };
    let cfg = SynthScenarioConfig {
        seed,
        n_sessions: n,
        frames_per_session: frames,
        ..SynthScenarioConfig::for_mode(mode, condition).reduced()
    };
    generate_dataset(&cfg).unwrap()
}

pub fn delta(height: usize, width: usize, row: usize, col: usize) -> AttentionMap {
    let mut v = vec![0.0; height * width];
    v[row * width + col] = 1.0;
    AttentionMap::normalized(height, width, v).unwrap()
}
