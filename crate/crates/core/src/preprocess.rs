//! Raw gaze streams to attention maps: event filtering, temporal
//! aggregation, rasterization and Gaussian smoothing.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::gaze::{GazeEvent, GazeRecord};
use crate::map::{AttentionMap, Grid, DEFAULT_MAP_HEIGHT, DEFAULT_MAP_WIDTH};

/// Clip ceiling used for cumulative heatmap visualizations.
pub const CUMULATIVE_CLIP: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Fixations within this many seconds of a frame timestamp are pooled.
    pub aggregation_halfwidth: f64,
    /// Smoothing sigma in cells of the target grid.
    pub gaussian_sigma: f64,
    pub target_height: usize,
    pub target_width: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            aggregation_halfwidth: 0.01,
            gaussian_sigma: 1.5,
            target_height: DEFAULT_MAP_HEIGHT,
            target_width: DEFAULT_MAP_WIDTH,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.aggregation_halfwidth > 0.0) || !(self.gaussian_sigma > 0.0) {
            return Err(CoreError::InvalidConfig(
                "aggregation halfwidth and sigma must be positive".into(),
            ));
        }
        if self.target_height == 0 || self.target_width == 0 {
            return Err(CoreError::EmptyDimensions {
                height: self.target_height,
                width: self.target_width,
            });
        }
        Ok(())
    }
}

/// Keeps valid fixations, dropping blinks and saccades. Order is preserved.
pub fn filter_events(records: &[GazeRecord]) -> Vec<GazeRecord> {
    records
        .iter()
        .filter(|r| r.valid && r.event == GazeEvent::Fixation)
        .copied()
        .collect()
}

/// Coordinates of every record within `halfwidth` seconds of `t`.
pub fn aggregate_fixations(records: &[GazeRecord], t: f64, halfwidth: f64) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter(|r| (r.timestamp - t).abs() <= halfwidth)
        .map(|r| (r.x, r.y))
        .collect()
}

/// Deposits unit mass per point at its containing cell, smooths, and
/// normalizes. No points yields the uniform map.
pub fn rasterize_and_smooth(points: &[(f64, f64)], cfg: &PreprocessConfig) -> AttentionMap {
    let (h, w) = (cfg.target_height, cfg.target_width);
    if points.is_empty() {
        return AttentionMap::uniform(h, w);
    }
    let mut grid = vec![0.0; h * w];
    for &(x, y) in points {
        let row = ((y * h as f64).floor().max(0.0) as usize).min(h - 1);
        let col = ((x * w as f64).floor().max(0.0) as usize).min(w - 1);
        grid[row * w + col] += 1.0;
    }
    let smoothed = gaussian_blur(&grid, h, w, cfg.gaussian_sigma);
    AttentionMap::normalized_or_uniform(h, w, smoothed).expect("shape is consistent")
}

/// Normalized 1-D Gaussian taps truncated at four sigma.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Separable isotropic Gaussian convolution with zero-padded borders.
/// Mass that would land outside the grid is lost; callers renormalize.
pub fn gaussian_blur(values: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    assert_eq!(values.len(), height * width);
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as i64;
    let mut tmp = vec![0.0; height * width];
    for r in 0..height {
        for c in 0..width {
            let v = values[r * width + c];
            if v == 0.0 {
                continue;
            }
            for (k, t) in taps.iter().enumerate() {
                let cc = c as i64 + k as i64 - radius;
                if cc >= 0 && (cc as usize) < width {
                    tmp[r * width + cc as usize] += v * t;
                }
            }
        }
    }
    let mut out = vec![0.0; height * width];
    for r in 0..height {
        for c in 0..width {
            let v = tmp[r * width + c];
            if v == 0.0 {
                continue;
            }
            for (k, t) in taps.iter().enumerate() {
                let rr = r as i64 + k as i64 - radius;
                if rr >= 0 && (rr as usize) < height {
                    out[rr as usize * width + c] += v * t;
                }
            }
        }
    }
    out
}

/// Cell-wise mean of `maps`, renormalized and clipped to `[0, clip_max]`.
///
/// The output is for display; clipping breaks normalization.
pub fn cumulative_heatmap(maps: &[AttentionMap], clip_max: f64) -> Result<Grid> {
    let mean = mean_map(maps)?;
    if !(clip_max > 0.0) {
        return Err(CoreError::InvalidConfig("clip_max must be positive".into()));
    }
    Ok(Grid {
        height: mean.height(),
        width: mean.width(),
        values: mean
            .values()
            .iter()
            .map(|v| v.clamp(0.0, clip_max))
            .collect(),
    })
}

/// Renormalized cell-wise mean of a non-empty list of same-shape maps.
pub fn mean_map(maps: &[AttentionMap]) -> Result<AttentionMap> {
    let first = maps.first().ok_or(CoreError::Empty("map list"))?;
    let mut acc = vec![0.0; first.len()];
    for m in maps {
        first.ensure_same_shape(m)?;
        for (a, v) in acc.iter_mut().zip(m.values()) {
            *a += v;
        }
    }
    let n = maps.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    AttentionMap::normalized_or_uniform(first.height(), first.width(), acc)
}
