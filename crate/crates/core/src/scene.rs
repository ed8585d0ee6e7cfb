use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const DEFAULT_FRAME_HEIGHT: usize = 256;
pub const DEFAULT_FRAME_WIDTH: usize = 512;
pub const SCENE_CHANNELS: usize = 3;

/// An RGB scene frame, stored at 8-bit precision in height x width x channel
/// order. Values read back through [`SceneTensor::value`] lie in [0, 1].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneTensor {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl SceneTensor {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CoreError::EmptyDimensions { height, width });
        }
        if data.len() != height * width * SCENE_CHANNELS {
            return Err(CoreError::ValueCount {
                expected: height * width * SCENE_CHANNELS,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width * SCENE_CHANNELS],
        }
    }

    /// Quantizes values in [0, 1] (clamped) to 8 bits.
    pub fn from_unit_values(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        let data = values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn value(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * SCENE_CHANNELS + channel] as f64 / 255.0
    }

    /// Channel-major copy (channel, row, col) scaled to [0, 1].
    pub fn to_chw(&self) -> Vec<f64> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; plane * SCENE_CHANNELS];
        for (i, px) in self.data.chunks_exact(SCENE_CHANNELS).enumerate() {
            for (c, v) in px.iter().enumerate() {
                out[c * plane + i] = *v as f64 / 255.0;
            }
        }
        out
    }
}
