//! Full attention model: backbone, recurrent cell and a conditioning head.

use std::fmt;

use drivattn_core::{AttentionMap, ConditionType, DriverState, SceneTensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{BackboneKind, ModelConfig, TemporalKind};
use crate::encoder::{Backbone, BackboneRegistry, ConvRnn};
use crate::error::{ModelError, Result};
use crate::heads::{ConditioningHead, HeadRegistry, HeadSpec};
use crate::params::{Forward, ParamGrads, ParamStore};
use crate::tape::Var;
use crate::tensor::{softmax, Tensor};

/// One training or evaluation sequence, borrowed from a session.
///
/// `states` may be empty for unconditioned models; `extra` holds one map per
/// frame when the model takes extra input channels; `targets` may be empty
/// when only predicting.
#[derive(Debug, Clone, Default)]
pub struct SequenceBatch<'a> {
    pub frames: Vec<&'a SceneTensor>,
    pub states: Vec<DriverState>,
    pub extra: Vec<AttentionMap>,
    pub targets: Vec<&'a AttentionMap>,
}

impl SequenceBatch<'_> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub struct AttentionModel {
    config: ModelConfig,
    params: ParamStore,
    backbone: Box<dyn Backbone>,
    temporal: Option<ConvRnn>,
    head: Box<dyn ConditioningHead>,
}

impl fmt::Debug for AttentionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AttentionModel")
            .field("head", &self.head.name())
            .field("backbone", &self.backbone.name())
            .field("params", &self.params.num_scalars())
            .finish()
    }
}

impl AttentionModel {
    /// Fresh model with the small convolutional backbone and the head named
    /// by `config.kind`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::build(config, seed, &HeadRegistry::default(), None)
    }

    pub fn with_registry(config: ModelConfig, seed: u64, registry: &HeadRegistry) -> Result<Self> {
        Self::build(config, seed, registry, None)
    }

    /// Model over an externally supplied backbone (see
    /// [`crate::encoder::ExternalBackbone`]).
    pub fn with_backbone(config: ModelConfig, seed: u64, backbone: Box<dyn Backbone>) -> Result<Self> {
        Self::build(config, seed, &HeadRegistry::default(), Some(backbone))
    }

    fn build(
        config: ModelConfig,
        seed: u64,
        registry: &HeadRegistry,
        backbone: Option<Box<dyn Backbone>>,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let backbone: Box<dyn Backbone> = match (backbone, config.encoder.backbone) {
            (Some(b), _) => {
                if b.out_channels() != config.encoder.feature_channels {
                    return Err(ModelError::Config(format!(
                        "backbone yields {} channels, config expects {}",
                        b.out_channels(),
                        config.encoder.feature_channels
                    )));
                }
                b
            }
            (None, BackboneKind::PretrainedExternal) => {
                return Err(ModelError::Config(
                    "an external backbone must be supplied for pretrained_external".into(),
                ))
            }
            (None, kind) => BackboneRegistry::default().build(kind.as_str(), &config.encoder, &mut params, &mut rng)?,
        };
        let c = config.temporal_in_channels();
        let temporal = match config.encoder.temporal {
            TemporalKind::RecurrentConv => Some(ConvRnn::new(&mut params, &mut rng, c, c)),
            TemporalKind::None => None,
        };
        let head = registry.build(
            config.kind.kind.as_str(),
            &HeadSpec::from_model(&config),
            &mut params,
            &mut rng,
        )?;
        Ok(Self {
            config,
            params,
            backbone,
            temporal,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn head_name(&self) -> &'static str {
        self.head.name()
    }

    pub fn condition_type(&self) -> Option<ConditionType> {
        self.head.condition_type()
    }

    pub fn map_shape(&self) -> (usize, usize) {
        self.config.map_shape()
    }

    fn check_batch(&self, batch: &SequenceBatch) -> Result<()> {
        let t = batch.len();
        if t == 0 {
            return Err(ModelError::Core(drivattn_core::CoreError::Empty("sequence")));
        }
        let needs_states = self.head.condition_type().is_some();
        if (needs_states || !batch.states.is_empty()) && batch.states.len() != t {
            return Err(ModelError::LengthMismatch(t, batch.states.len()));
        }
        if self.config.extra_input_channels > 0 && batch.extra.len() != t {
            return Err(ModelError::LengthMismatch(t, batch.extra.len()));
        }
        if !batch.targets.is_empty() && batch.targets.len() != t {
            return Err(ModelError::LengthMismatch(t, batch.targets.len()));
        }
        let (h, w) = self.map_shape();
        for m in batch.extra.iter().chain(batch.targets.iter().copied()) {
            if m.shape() != (h, w) {
                return Err(ModelError::Shape {
                    expected: format!("{h}x{w} map"),
                    actual: format!("{}x{}", m.height(), m.width()),
                });
            }
        }
        Ok(())
    }

    /// Per-frame features after the temporal cell, before the head.
    fn features(&self, fwd: &mut Forward, batch: &SequenceBatch) -> Result<Vec<Var>> {
        let (h, w) = self.map_shape();
        let scale = (h * w) as f64;
        let mut prev = None;
        let mut out = Vec::with_capacity(batch.len());
        for (t, frame) in batch.frames.iter().enumerate() {
            let mut x = self.backbone.forward(fwd, frame)?;
            if fwd.ablate_scene {
                x = fwd.tape.scale(x, 0.0);
            }
            if self.config.extra_input_channels > 0 {
                let m = &batch.extra[t];
                let plane = Tensor::new(vec![1, h, w], m.values().iter().map(|v| v * scale).collect());
                let e = fwd.tape.leaf(plane);
                x = fwd.tape.concat(&[x, e]);
            }
            if let Some(cell) = &self.temporal {
                x = cell.step(fwd, x, prev);
                prev = Some(x);
            }
            out.push(x);
        }
        Ok(out)
    }

    /// Per-frame logit planes `(1, h, w)` recorded on `fwd`.
    pub fn logits(&self, fwd: &mut Forward, batch: &SequenceBatch) -> Result<Vec<Var>> {
        self.check_batch(batch)?;
        let feats = self.features(fwd, batch)?;
        let coords = self.config.coord_channels.then(|| coord_planes(self.map_shape()));
        let mut out = Vec::with_capacity(feats.len());
        for (t, x) in feats.into_iter().enumerate() {
            let x = if self.config.global_context {
                let g = fwd.tape.global_mean(x);
                fwd.tape.concat(&[x, g])
            } else {
                x
            };
            let x = match &coords {
                Some(c) => {
                    let c = fwd.tape.leaf(c.clone());
                    fwd.tape.concat(&[x, c])
                }
                None => x,
            };
            let state = batch.states.get(t);
            out.push(self.head.forward(fwd, x, state)?);
        }
        Ok(out)
    }

    /// Per-frame feature grids for a sequence of frames (temporal cell
    /// included, decoder excluded).
    pub fn encode(&self, frames: &[SceneTensor]) -> Result<Vec<Tensor>> {
        if self.config.extra_input_channels > 0 {
            return Err(ModelError::Config("encode takes scene frames only".into()));
        }
        let batch = SequenceBatch {
            frames: frames.iter().collect(),
            ..Default::default()
        };
        if batch.is_empty() {
            return Err(ModelError::Core(drivattn_core::CoreError::Empty("sequence")));
        }
        let mut fwd = Forward::eval(&self.params);
        let feats = self.features(&mut fwd, &batch)?;
        Ok(feats.into_iter().map(|v| fwd.tape.value(v).clone()).collect())
    }

    /// Evaluation-mode prediction for a prepared batch.
    pub fn predict_batch(&self, batch: &SequenceBatch) -> Result<Vec<AttentionMap>> {
        self.predict_with(batch, |_| {})
    }

    /// Like [`predict_batch`](Self::predict_batch) but lets the caller set
    /// test hooks (routing override, scene ablation) on the forward pass.
    pub fn predict_with(
        &self,
        batch: &SequenceBatch,
        setup: impl FnOnce(&mut Forward),
    ) -> Result<Vec<AttentionMap>> {
        let mut fwd = Forward::eval(&self.params);
        setup(&mut fwd);
        let logits = self.logits(&mut fwd, batch)?;
        let (h, w) = self.map_shape();
        logits
            .into_iter()
            .map(|v| Ok(AttentionMap::from_values(h, w, softmax(&fwd.tape.value(v).data))?))
            .collect()
    }

    /// One attention map per frame under the given driver states.
    pub fn predict(&self, frames: &[SceneTensor], states: &[DriverState]) -> Result<Vec<AttentionMap>> {
        let batch = SequenceBatch {
            frames: frames.iter().collect(),
            states: states.to_vec(),
            ..Default::default()
        };
        self.predict_batch(&batch)
    }

    /// Mean per-frame cross-entropy and its gradient, in training mode
    /// (dropout active, masks drawn from `rng`).
    pub fn loss_and_grad(&self, batch: &SequenceBatch, rng: ChaCha8Rng) -> Result<(f64, ParamGrads)> {
        let mut fwd = Forward::train(&self.params, rng);
        let loss = self.loss_on(&mut fwd, batch)?;
        let value = fwd.tape.value(loss).data[0];
        Ok((value, fwd.param_grads(loss)))
    }

    /// Same as [`loss_and_grad`](Self::loss_and_grad) with dropout disabled.
    pub fn eval_loss_and_grad(&self, batch: &SequenceBatch) -> Result<(f64, ParamGrads)> {
        let mut fwd = Forward::eval(&self.params);
        let loss = self.loss_on(&mut fwd, batch)?;
        let value = fwd.tape.value(loss).data[0];
        Ok((value, fwd.param_grads(loss)))
    }

    /// Evaluation-mode mean cross-entropy.
    pub fn loss(&self, batch: &SequenceBatch) -> Result<f64> {
        let mut fwd = Forward::eval(&self.params);
        let loss = self.loss_on(&mut fwd, batch)?;
        Ok(fwd.tape.value(loss).data[0])
    }

    /// Evaluation-mode loss with the ReLU sign pattern of the pass, for
    /// finite-difference checks that must avoid activation kinks.
    pub fn loss_with_relu_pattern(&self, batch: &SequenceBatch) -> Result<(f64, Vec<bool>)> {
        let mut fwd = Forward::eval(&self.params);
        let loss = self.loss_on(&mut fwd, batch)?;
        Ok((fwd.tape.value(loss).data[0], fwd.tape.relu_pattern()))
    }

    fn loss_on(&self, fwd: &mut Forward, batch: &SequenceBatch) -> Result<Var> {
        if batch.targets.len() != batch.len() {
            return Err(ModelError::LengthMismatch(batch.len(), batch.targets.len()));
        }
        let logits = self.logits(fwd, batch)?;
        let terms: Vec<Var> = logits
            .iter()
            .zip(&batch.targets)
            .map(|(l, gt)| fwd.tape.softmax_cross_entropy(*l, gt.values().to_vec()))
            .collect();
        let total = fwd.tape.sum(&terms);
        Ok(fwd.tape.scale(total, 1.0 / terms.len() as f64))
    }
}

/// Row and column coordinates in `[-1, 1]` at cell centers, `(2, h, w)`.
fn coord_planes((h, w): (usize, usize)) -> Tensor {
    let mut data = Vec::with_capacity(2 * h * w);
    for r in 0..h {
        data.extend(std::iter::repeat_n(2.0 * (r as f64 + 0.5) / h as f64 - 1.0, w));
    }
    for _ in 0..h {
        data.extend((0..w).map(|c| 2.0 * (c as f64 + 0.5) / w as f64 - 1.0));
    }
    Tensor::new(vec![2, h, w], data)
}

/// Cross-entropy `-sum gt_i ln pred_i` in nats. Cells with zero ground-truth
/// mass contribute nothing.
pub fn attention_loss(pred: &AttentionMap, gt: &AttentionMap) -> Result<f64> {
    pred.ensure_same_shape(gt)?;
    Ok(pred
        .values()
        .iter()
        .zip(gt.values())
        .filter(|(_, g)| **g > 0.0)
        .map(|(p, g)| -g * p.ln())
        .sum())
}
