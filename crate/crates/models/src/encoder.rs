//! Scene encoders and the recurrent convolutional cell.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use drivattn_core::SceneTensor;
use rand_chacha::ChaCha8Rng;

use crate::config::{BackboneKind, EncoderConfig};
use crate::error::{ModelError, Result};
use crate::params::{he_normal, Forward, ParamId, ParamStore};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Maps one frame to a `(channels, H/8, W/8)` feature grid.
pub trait Backbone: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn out_channels(&self) -> usize;
    fn forward(&self, fwd: &mut Forward, frame: &SceneTensor) -> Result<Var>;
}

fn check_frame(frame: &SceneTensor, height: usize, width: usize) -> Result<()> {
    if frame.height() != height || frame.width() != width {
        return Err(ModelError::Shape {
            expected: format!("{height}x{width} frame"),
            actual: format!("{}x{}", frame.height(), frame.width()),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct ConvLayer {
    weight: ParamId,
    bias: ParamId,
    stride: usize,
    pad: usize,
}

impl ConvLayer {
    fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        (inp, out, k): (usize, usize, usize),
        stride: usize,
        gain: f64,
    ) -> Self {
        Self {
            weight: store.add(format!("{name}.weight"), he_normal(rng, out, inp, k, gain)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[out])),
            stride,
            pad: k / 2,
        }
    }

    fn apply(&self, fwd: &mut Forward, x: Var) -> Var {
        let w = fwd.param(self.weight);
        let b = fwd.param(self.bias);
        fwd.tape.conv2d(x, w, Some(b), self.stride, self.pad)
    }
}

/// Plain convolution layer registered under `name`, reused by the heads.
#[derive(Debug, Clone, Copy)]
pub struct Conv(ConvLayer);

impl Conv {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        inp: usize,
        out: usize,
        kernel: usize,
        gain: f64,
    ) -> Self {
        Self(ConvLayer::new(store, rng, name, (inp, out, kernel), 1, gain))
    }

    pub fn apply(&self, fwd: &mut Forward, x: Var) -> Var {
        self.0.apply(fwd, x)
    }
}

/// Three stride-2 convolutions then one stride-1 convolution, each
/// followed by ReLU.
#[derive(Debug)]
pub struct SmallConvEncoder {
    layers: [ConvLayer; 4],
    frame_height: usize,
    frame_width: usize,
    channels: usize,
}

impl SmallConvEncoder {
    pub fn new(cfg: &EncoderConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let s = cfg.stem_channels;
        let c = cfg.feature_channels;
        let layers = [
            ConvLayer::new(store, rng, "encoder.conv0", (3, s, 3), 2, 1.0),
            ConvLayer::new(store, rng, "encoder.conv1", (s, 2 * s, 3), 2, 1.0),
            ConvLayer::new(store, rng, "encoder.conv2", (2 * s, c, 3), 2, 1.0),
            ConvLayer::new(store, rng, "encoder.conv3", (c, c, 3), 1, 1.0),
        ];
        Self {
            layers,
            frame_height: cfg.frame_height,
            frame_width: cfg.frame_width,
            channels: c,
        }
    }
}

impl Backbone for SmallConvEncoder {
    fn name(&self) -> &'static str {
        "small_conv"
    }

    fn out_channels(&self) -> usize {
        self.channels
    }

    fn forward(&self, fwd: &mut Forward, frame: &SceneTensor) -> Result<Var> {
        check_frame(frame, self.frame_height, self.frame_width)?;
        let mut x = fwd
            .tape
            .leaf(Tensor::new(vec![3, frame.height(), frame.width()], frame.to_chw()));
        for layer in &self.layers {
            x = layer.apply(fwd, x);
            x = fwd.tape.relu(x);
        }
        Ok(x)
    }
}

/// Frozen feature source supplied from outside the crate, for example a
/// pretrained network run elsewhere.
pub trait FeatureExtractor: Send + Sync + fmt::Debug {
    fn channels(&self) -> usize;
    /// Features of shape `(channels, H/8, W/8)` for `frame`.
    fn extract(&self, frame: &SceneTensor) -> Tensor;
}

#[derive(Debug, Clone)]
pub struct ExternalBackbone {
    extractor: Arc<dyn FeatureExtractor>,
    frame_height: usize,
    frame_width: usize,
}

impl ExternalBackbone {
    pub fn new(cfg: &EncoderConfig, extractor: Arc<dyn FeatureExtractor>) -> Result<Self> {
        if extractor.channels() != cfg.feature_channels {
            return Err(ModelError::Config(format!(
                "external extractor yields {} channels, config expects {}",
                extractor.channels(),
                cfg.feature_channels
            )));
        }
        Ok(Self {
            extractor,
            frame_height: cfg.frame_height,
            frame_width: cfg.frame_width,
        })
    }
}

impl Backbone for ExternalBackbone {
    fn name(&self) -> &'static str {
        "pretrained_external"
    }

    fn out_channels(&self) -> usize {
        self.extractor.channels()
    }

    fn forward(&self, fwd: &mut Forward, frame: &SceneTensor) -> Result<Var> {
        check_frame(frame, self.frame_height, self.frame_width)?;
        let feats = self.extractor.extract(frame);
        let expected = [self.extractor.channels(), self.frame_height / 8, self.frame_width / 8];
        if feats.shape != expected {
            return Err(ModelError::Shape {
                expected: format!("{expected:?}"),
                actual: format!("{:?}", feats.shape),
            });
        }
        Ok(fwd.tape.leaf(feats))
    }
}

pub type BackboneFactory = fn(&EncoderConfig, &mut ParamStore, &mut ChaCha8Rng) -> Result<Box<dyn Backbone>>;

/// Backbones that can be built from configuration alone, by name. The
/// external backbone wraps a caller-owned extractor and is passed in
/// directly instead.
#[derive(Clone)]
pub struct BackboneRegistry {
    factories: BTreeMap<String, BackboneFactory>,
}

impl fmt::Debug for BackboneRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl Default for BackboneRegistry {
    fn default() -> Self {
        let mut reg = Self {
            factories: BTreeMap::new(),
        };
        reg.register(BackboneKind::SmallConv.as_str(), |cfg, store, rng| {
            Ok(Box::new(SmallConvEncoder::new(cfg, store, rng)))
        });
        reg
    }
}

impl BackboneRegistry {
    pub fn register(&mut self, name: &str, factory: BackboneFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(
        &self,
        name: &str,
        cfg: &EncoderConfig,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Box<dyn Backbone>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| ModelError::UnknownBackbone(name.to_string()))?;
        factory(cfg, store, rng)
    }
}

/// `h_t = tanh(W_x * x_t + W_h * h_{t-1} + b)` with 3x3 kernels and
/// `h_0 = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ConvRnn {
    input: ParamId,
    hidden: ParamId,
    bias: ParamId,
}

impl ConvRnn {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, inp: usize, hidden: usize) -> Self {
        Self {
            input: store.add("temporal.input.weight", he_normal(rng, hidden, inp, 3, 0.5)),
            hidden: store.add("temporal.hidden.weight", he_normal(rng, hidden, hidden, 3, 0.5)),
            bias: store.add("temporal.bias", Tensor::zeros(&[hidden])),
        }
    }

    pub fn step(&self, fwd: &mut Forward, x: Var, prev: Option<Var>) -> Var {
        let wi = fwd.param(self.input);
        let b = fwd.param(self.bias);
        let mut pre = fwd.tape.conv2d(x, wi, Some(b), 1, 1);
        if let Some(h) = prev {
            let wh = fwd.param(self.hidden);
            let rec = fwd.tape.conv2d(h, wh, None, 1, 1);
            pre = fwd.tape.add(pre, rec);
        }
        fwd.tape.tanh(pre)
    }
}
