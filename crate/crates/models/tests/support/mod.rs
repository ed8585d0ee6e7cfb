#![allow(dead_code)]

use drivattn_core::{ConditionType, SceneTensor};
use drivattn_models::{EncoderConfig, HeadKind, ModelConfig, ModelKind, TemporalKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

pub fn without_temporal(mut cfg: ModelConfig) -> ModelConfig {
    cfg.encoder.temporal = TemporalKind::None;
    cfg
}

pub fn random_frames(n: usize, height: usize, width: usize, seed: u64) -> Vec<SceneTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let data = (0..height * width * 3).map(|_| rng.random::<u8>()).collect();
            SceneTensor::new(height, width, data).unwrap()
        })
        .collect()
}

pub fn random_map(height: usize, width: usize, rng: &mut ChaCha8Rng) -> drivattn_core::AttentionMap {
    let v = (0..height * width).map(|_| rng.random::<f64>().powi(4) + 1e-3).collect();
    drivattn_core::AttentionMap::normalized(height, width, v).unwrap()
}

/// Frames made of 8x8 blocks of random colour. Few distinct patches keep
/// pre-activations away from ReLU kinks, which finite differences cannot
/// resolve.
pub fn block_frames(n: usize, height: usize, width: usize, seed: u64) -> Vec<SceneTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (bh, bw) = (height.div_ceil(8), width.div_ceil(8));
            let colours: Vec<[u8; 3]> = (0..bh * bw).map(|_| rng.random()).collect();
            let mut data = Vec::with_capacity(height * width * 3);
            for r in 0..height {
                for c in 0..width {
                    data.extend(colours[(r / 8) * bw + c / 8]);
                }
            }
            SceneTensor::new(height, width, data).unwrap()
        })
        .collect()
}
