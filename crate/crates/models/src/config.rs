use std::fmt;
use std::str::FromStr;

use drivattn_core::scene::{DEFAULT_FRAME_HEIGHT, DEFAULT_FRAME_WIDTH};
use drivattn_core::ConditionType;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Total spatial reduction of the encoder: frames are this many times
/// larger than attention maps along each axis.
pub const ENCODER_STRIDE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    /// Four-layer strided convolutional encoder trained from scratch.
    SmallConv,
    /// Externally supplied feature extractor.
    PretrainedExternal,
}

impl BackboneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackboneKind::SmallConv => "small_conv",
            BackboneKind::PretrainedExternal => "pretrained_external",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalKind {
    RecurrentConv,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub backbone: BackboneKind,
    pub feature_channels: usize,
    pub temporal: TemporalKind,
    /// Width of the first encoder layer; the second doubles it.
    pub stem_channels: usize,
    pub frame_height: usize,
    pub frame_width: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneKind::SmallConv,
            feature_channels: 8,
            temporal: TemporalKind::RecurrentConv,
            stem_channels: 8,
            frame_height: DEFAULT_FRAME_HEIGHT,
            frame_width: DEFAULT_FRAME_WIDTH,
        }
    }
}

impl EncoderConfig {
    pub fn map_height(&self) -> usize {
        self.frame_height / ENCODER_STRIDE
    }

    pub fn map_width(&self) -> usize {
        self.frame_width / ENCODER_STRIDE
    }

    /// Sizes frames for the given attention map grid.
    pub fn for_map(mut self, map_height: usize, map_width: usize) -> Self {
        self.frame_height = map_height * ENCODER_STRIDE;
        self.frame_width = map_width * ENCODER_STRIDE;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondConvLayerConfig {
    pub num_experts: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub dropout: f64,
}

impl CondConvLayerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_experts < 2 {
            return Err(ModelError::Config("conditional layers need at least two experts".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(ModelError::Config(
                "channels must be positive and kernel size odd".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Conditioning strategy; the string form is the registry key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    Unconditioned,
    MultiBranch,
    CondConv,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Unconditioned => "unconditioned",
            HeadKind::MultiBranch => "multi-branch",
            HeadKind::CondConv => "cond-conv",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unconditioned" => Ok(HeadKind::Unconditioned),
            "multi-branch" | "multi_branch" => Ok(HeadKind::MultiBranch),
            "cond-conv" | "cond_conv" => Ok(HeadKind::CondConv),
            other => Err(ModelError::UnknownHead(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelKind {
    pub kind: HeadKind,
    pub condition_type: Option<ConditionType>,
}

impl ModelKind {
    pub fn new(kind: HeadKind, condition_type: Option<ConditionType>) -> Result<Self> {
        let mk = Self {
            kind,
            condition_type,
        };
        mk.validate()?;
        Ok(mk)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.condition_type) {
            (HeadKind::Unconditioned, Some(c)) => Err(ModelError::Config(format!(
                "unconditioned models take no condition type (got {c})"
            ))),
            (HeadKind::MultiBranch | HeadKind::CondConv, None) => Err(ModelError::Config(format!(
                "{} models need a condition type",
                self.kind
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub encoder: EncoderConfig,
    pub decoder_channels: usize,
    pub num_experts: usize,
    /// Dropout ahead of plain decoder layers.
    pub dropout: f64,
    /// Dropout ahead of conditional-convolution layers.
    pub cond_dropout: f64,
    /// Appends normalized (row, col) coordinate planes to the decoder input.
    pub coord_channels: bool,
    /// Appends each feature channel's spatial mean, broadcast over the
    /// grid, so every cell sees scene-wide context.
    #[serde(default)]
    pub global_context: bool,
    /// Extra per-frame map channels concatenated to the scene features
    /// (1 for the calibration network's webcam input).
    pub extra_input_channels: usize,
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            encoder: EncoderConfig::default(),
            decoder_channels: 8,
            num_experts: 4,
            dropout: 0.5,
            cond_dropout: 0.7,
            coord_channels: true,
            global_context: true,
            extra_input_channels: 0,
        }
    }

    pub fn map_shape(&self) -> (usize, usize) {
        (self.encoder.map_height(), self.encoder.map_width())
    }

    /// Channels entering the temporal cell.
    pub fn temporal_in_channels(&self) -> usize {
        self.encoder.feature_channels + self.extra_input_channels
    }

    /// Channels entering the decoder head.
    pub fn head_in_channels(&self) -> usize {
        let t = self.temporal_in_channels();
        t + if self.global_context { t } else { 0 } + if self.coord_channels { 2 } else { 0 }
    }

    /// Configurations of the two conditional layers at the end of the
    /// decoder (empty unless the head is `cond-conv`).
    pub fn cond_conv_layers(&self) -> Vec<CondConvLayerConfig> {
        if self.kind.kind != HeadKind::CondConv {
            return Vec::new();
        }
        vec![
            CondConvLayerConfig {
                num_experts: self.num_experts,
                in_channels: self.decoder_channels,
                out_channels: self.decoder_channels,
                kernel_size: 3,
                dropout: self.cond_dropout,
            },
            CondConvLayerConfig {
                num_experts: self.num_experts,
                in_channels: self.decoder_channels,
                out_channels: 1,
                kernel_size: 1,
                dropout: self.cond_dropout,
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        let e = &self.encoder;
        if !e.frame_height.is_multiple_of(ENCODER_STRIDE) || !e.frame_width.is_multiple_of(ENCODER_STRIDE) || e.frame_height == 0 || e.frame_width == 0 {
            return Err(ModelError::Config(format!(
                "frame size {}x{} must be a positive multiple of {ENCODER_STRIDE}",
                e.frame_height, e.frame_width
            )));
        }
        if e.feature_channels == 0 || e.stem_channels == 0 || self.decoder_channels == 0 {
            return Err(ModelError::Config("channel counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config("dropout must lie in [0, 1)".into()));
        }
        for layer in self.cond_conv_layers() {
            layer.validate()?;
        }
        Ok(())
    }
}
