use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::map::{validate_map, AttentionMap};
use crate::scene::SceneTensor;
use crate::state::DriverState;

/// Frame rate of sampled sequences.
pub const DEFAULT_FPS: f64 = 4.0;

const TIMESTAMP_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrivingMode {
    Autopilot,
    Manual,
}

impl DrivingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DrivingMode::Autopilot => "autopilot",
            DrivingMode::Manual => "manual",
        }
    }
}

impl fmt::Display for DrivingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DrivingMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autopilot" => Ok(DrivingMode::Autopilot),
            "manual" => Ok(DrivingMode::Manual),
            other => Err(CoreError::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSample {
    pub frame: SceneTensor,
    pub timestamp: f64,
    pub state: DriverState,
    pub gt_map: AttentionMap,
    pub webcam_map: Option<AttentionMap>,
    /// Meters to the nearest intersection center; `f64::INFINITY` on open road.
    pub dist_to_intersection: f64,
    pub mode: DrivingMode,
}

impl FrameSample {
    pub fn is_open_road(&self) -> bool {
        self.dist_to_intersection.is_infinite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub fps: f64,
    pub mode: DrivingMode,
    pub frames: Vec<FrameSample>,
    /// World (x, y) positions in meters, parallel to `frames`.
    pub ego_positions: Option<Vec<[f64; 2]>>,
}

impl SessionRecord {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn map_shape(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| f.gt_map.shape())
    }

    pub fn distances(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.dist_to_intersection).collect()
    }

    /// Checks the session-level invariants: consistent timing, a single mode,
    /// valid maps, non-negative distances and parallel ego positions.
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) {
            return Err(CoreError::InvalidConfig("fps must be positive".into()));
        }
        let Some(first) = self.frames.first() else {
            return Ok(());
        };
        for (i, f) in self.frames.iter().enumerate() {
            let expected = first.timestamp + i as f64 / self.fps;
            if (f.timestamp - expected).abs() > TIMESTAMP_TOLERANCE {
                return Err(CoreError::InvalidConfig(format!(
                    "frame {i} timestamp {} inconsistent with fps {}",
                    f.timestamp, self.fps
                )));
            }
            if f.mode != self.mode {
                return Err(CoreError::InvalidConfig(format!(
                    "frame {i} mode differs from session mode"
                )));
            }
            if !validate_map(&f.gt_map) || f.gt_map.shape() != first.gt_map.shape() {
                return Err(CoreError::InvalidMap(format!("frame {i} ground truth")));
            }
            if let Some(w) = &f.webcam_map {
                if !validate_map(w) || w.shape() != first.gt_map.shape() {
                    return Err(CoreError::InvalidMap(format!("frame {i} webcam map")));
                }
            }
            if f.dist_to_intersection.is_nan() || f.dist_to_intersection < 0.0 {
                return Err(CoreError::InvalidConfig(format!(
                    "frame {i} has negative distance to intersection"
                )));
            }
        }
        if let Some(pos) = &self.ego_positions {
            if pos.len() != self.frames.len() {
                return Err(CoreError::ValueCount {
                    expected: self.frames.len(),
                    actual: pos.len(),
                });
            }
        }
        Ok(())
    }
}
