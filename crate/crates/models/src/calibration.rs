//! Coarse-to-fine calibration of low-resolution webcam gaze.
//!
//! The coarse stage re-centers each webcam map using the peak of a sliding
//! window aggregate; the fine stage is a recurrent network that sees the
//! scene together with the centered map.

use drivattn_core::shift::{apply_shift, coarse_offset, SlidingWindow, DEFAULT_MAX_OFFSET};
use drivattn_core::{AttentionMap, SceneTensor, SessionRecord};
use serde::{Deserialize, Serialize};

use crate::config::{EncoderConfig, HeadKind, ModelConfig, ModelKind};
use crate::error::{ModelError, Result};
use crate::model::{AttentionModel, SequenceBatch};

pub const DEFAULT_WINDOW: usize = 64;

/// How the coarse offset is estimated over a sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetMode {
    /// Offset at frame t from the latest `min(t + 1, window)` maps.
    #[default]
    Causal,
    /// One offset from every map of the sequence (not causal).
    PerSequence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub window: usize,
    pub max_offset: usize,
    pub coarse: bool,
    pub fine_tune: bool,
    #[serde(default)]
    pub offset_mode: OffsetMode,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            max_offset: DEFAULT_MAX_OFFSET,
            coarse: true,
            fine_tune: true,
            offset_mode: OffsetMode::Causal,
        }
    }
}

impl CalibrationConfig {
    pub fn with_stages(coarse: bool, fine_tune: bool) -> Self {
        Self {
            coarse,
            fine_tune,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(ModelError::Config("calibration window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Fine calibration network: the unconditioned attention model with one
/// extra input channel carrying the centered webcam map.
#[derive(Debug)]
pub struct CalibrationNet {
    model: AttentionModel,
}

impl CalibrationNet {
    pub fn model_config(encoder: EncoderConfig) -> ModelConfig {
        let mut cfg = ModelConfig::new(ModelKind {
            kind: HeadKind::Unconditioned,
            condition_type: None,
        });
        cfg.encoder = encoder;
        cfg.extra_input_channels = 1;
        cfg
    }

    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::from_model(AttentionModel::new(config, seed)?)
    }

    pub fn from_model(model: AttentionModel) -> Result<Self> {
        let cfg = model.config();
        if cfg.extra_input_channels != 1 || cfg.kind.kind != HeadKind::Unconditioned {
            return Err(ModelError::Config(
                "calibration networks are unconditioned with one extra input channel".into(),
            ));
        }
        Ok(Self { model })
    }

    pub fn model(&self) -> &AttentionModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut AttentionModel {
        &mut self.model
    }

    pub fn into_model(self) -> AttentionModel {
        self.model
    }
}

/// Input batch for the fine network; `targets` may be empty.
pub fn calibration_batch<'a>(
    frames: &[&'a SceneTensor],
    centered: &[AttentionMap],
    targets: &[&'a AttentionMap],
) -> SequenceBatch<'a> {
    SequenceBatch {
        frames: frames.to_vec(),
        states: Vec::new(),
        extra: centered.to_vec(),
        targets: targets.to_vec(),
    }
}

/// Coarse stage over a whole sequence of webcam maps.
pub fn coarse_center(maps: &[AttentionMap], cfg: &CalibrationConfig) -> Result<Vec<AttentionMap>> {
    cfg.validate()?;
    match cfg.offset_mode {
        OffsetMode::Causal => {
            let mut window = SlidingWindow::new(cfg.window, cfg.max_offset)?;
            maps.iter()
                .map(|m| {
                    let offset = window.push(m.clone())?;
                    Ok(apply_shift(m, offset))
                })
                .collect()
        }
        OffsetMode::PerSequence => {
            if maps.is_empty() {
                return Ok(Vec::new());
            }
            let offset = coarse_offset(maps, cfg.max_offset)?;
            Ok(maps.iter().map(|m| apply_shift(m, offset)).collect())
        }
    }
}

/// Fine stage: one refined map per frame from the scene and the centered map.
pub fn fine_calibrate(
    frames: &[&SceneTensor],
    centered: &[AttentionMap],
    net: &CalibrationNet,
) -> Result<Vec<AttentionMap>> {
    if frames.len() != centered.len() {
        return Err(ModelError::LengthMismatch(frames.len(), centered.len()));
    }
    net.model.predict_batch(&calibration_batch(frames, centered, &[]))
}

/// Runs the enabled stages over a session's webcam maps. `net` is required
/// only when `cfg.fine_tune` is set.
pub fn calibrate_pipeline(
    session: &SessionRecord,
    cfg: &CalibrationConfig,
    net: Option<&CalibrationNet>,
) -> Result<Vec<AttentionMap>> {
    let webcam = webcam_maps(session)?;
    let maps = if cfg.coarse {
        coarse_center(&webcam, cfg)?
    } else {
        cfg.validate()?;
        webcam
    };
    if !cfg.fine_tune || maps.is_empty() {
        return Ok(maps);
    }
    let net = net.ok_or_else(|| ModelError::Config("fine stage enabled without a calibration network".into()))?;
    let frames: Vec<&SceneTensor> = session.frames.iter().map(|f| &f.frame).collect();
    fine_calibrate(&frames, &maps, net)
}

pub fn webcam_maps(session: &SessionRecord) -> Result<Vec<AttentionMap>> {
    session
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| f.webcam_map.clone().ok_or(ModelError::MissingWebcam { frame: i }))
        .collect()
}
