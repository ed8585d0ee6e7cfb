use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeEvent {
    Fixation,
    Saccade,
    Blink,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeSource {
    Tracker,
    Webcam,
}

/// One raw gaze sample in normalized scene coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeRecord {
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
    pub event: GazeEvent,
    pub source: GazeSource,
}

impl GazeRecord {
    pub fn fixation(timestamp: f64, x: f64, y: f64) -> Self {
        Self {
            timestamp,
            x,
            y,
            valid: true,
            event: GazeEvent::Fixation,
            source: GazeSource::Tracker,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.timestamp >= 0.0
            && (!self.valid || ((0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)))
    }
}
