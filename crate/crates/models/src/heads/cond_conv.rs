use drivattn_core::{ConditionType, DriverState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_state, ConditioningHead, HeadSpec};
use crate::config::CondConvLayerConfig;
use crate::encoder::Conv;
use crate::error::{ModelError, Result};
use crate::params::{he_normal, normal_tensor, Forward, ParamId, ParamStore};
use crate::tape::{self, Var};
use crate::tensor::Tensor;

const ROUTING_INIT_STD: f64 = 0.5;

/// Parameter handles of one conditional convolution.
///
/// Expert kernels are stored stacked as `(N, O, C, K, K)`; the routing layer
/// maps the one-hot state to `N` sigmoid weights which blend the experts into
/// one kernel before a single convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CondConvIds {
    experts: ParamId,
    expert_bias: ParamId,
    routing_weight: ParamId,
    routing_bias: ParamId,
    num_experts: usize,
    pad: usize,
}

impl CondConvIds {
    pub(crate) fn register(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        cfg: &CondConvLayerConfig,
        num_states: usize,
        gain: f64,
    ) -> Self {
        let (n, o, c, k) = (cfg.num_experts, cfg.out_channels, cfg.in_channels, cfg.kernel_size);
        let mut stacked = Vec::with_capacity(n * o * c * k * k);
        for _ in 0..n {
            stacked.extend(he_normal(rng, o, c, k, gain).data);
        }
        let experts = store.add(format!("{prefix}.experts"), Tensor::new(vec![n, o, c, k, k], stacked));
        let expert_bias = store.add(format!("{prefix}.expert_bias"), Tensor::zeros(&[n, o]));
        let routing_weight = store.add(
            format!("{prefix}.routing.weight"),
            normal_tensor(rng, &[n, num_states], ROUTING_INIT_STD),
        );
        let routing_bias = store.add(format!("{prefix}.routing.bias"), Tensor::zeros(&[n]));
        Self {
            experts,
            expert_bias,
            routing_weight,
            routing_bias,
            num_experts: n,
            pad: k / 2,
        }
    }

    fn routing(&self, fwd: &mut Forward, one_hot: &[f64]) -> Result<Var> {
        if let Some(r) = &fwd.routing_override {
            if r.len() != self.num_experts {
                return Err(ModelError::LengthMismatch(self.num_experts, r.len()));
            }
            let r = Tensor::new(vec![r.len()], r.clone());
            return Ok(fwd.tape.leaf(r));
        }
        let a = fwd.param(self.routing_weight);
        let b = fwd.param(self.routing_bias);
        let x = fwd.tape.leaf(Tensor::new(vec![one_hot.len()], one_hot.to_vec()));
        let z = fwd.tape.matvec(a, x);
        let z = fwd.tape.add(z, b);
        Ok(fwd.tape.sigmoid(z))
    }

    pub(crate) fn apply(&self, fwd: &mut Forward, x: Var, one_hot: &[f64]) -> Result<Var> {
        let r = self.routing(fwd, one_hot)?;
        let experts = fwd.param(self.experts);
        let biases = fwd.param(self.expert_bias);
        let kernel = fwd.tape.mix(r, experts);
        let bias = fwd.tape.mix(r, biases);
        Ok(fwd.tape.conv2d(x, kernel, Some(bias), 1, self.pad))
    }
}

/// Decoder whose last two layers are conditional convolutions.
#[derive(Debug)]
pub struct CondConvHead {
    condition_type: ConditionType,
    conv0: Conv,
    cond1: CondConvIds,
    cond2: CondConvIds,
    dropout: f64,
}

impl CondConvHead {
    pub fn build(
        spec: &HeadSpec,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Box<dyn ConditioningHead>> {
        let condition_type = spec.require_condition("cond-conv")?;
        let d = spec.decoder_channels;
        let layer = |inp, out, kernel| CondConvLayerConfig {
            num_experts: spec.num_experts,
            in_channels: inp,
            out_channels: out,
            kernel_size: kernel,
            dropout: spec.cond_dropout,
        };
        let (l1, l2) = (layer(d, d, 3), layer(d, 1, 1));
        l1.validate()?;
        l2.validate()?;
        let s = condition_type.num_states();
        let conv0 = Conv::new(store, rng, "head.conv0", spec.in_channels, d, 3, 1.0);
        let cond1 = CondConvIds::register(store, rng, "head.cond1", &l1, s, 1.0);
        let cond2 = CondConvIds::register(store, rng, "head.cond2", &l2, s, 0.1);
        Ok(Box::new(Self {
            condition_type,
            conv0,
            cond1,
            cond2,
            dropout: spec.cond_dropout,
        }))
    }
}

impl ConditioningHead for CondConvHead {
    fn name(&self) -> &'static str {
        "cond-conv"
    }

    fn condition_type(&self) -> Option<ConditionType> {
        Some(self.condition_type)
    }

    fn forward(&self, fwd: &mut Forward, input: Var, state: Option<&DriverState>) -> Result<Var> {
        let one_hot = check_state(self.condition_type, state)?.one_hot();
        let h = self.conv0.apply(fwd, input);
        let h = fwd.tape.relu(h);
        let h = fwd.dropout(h, self.dropout);
        let h = self.cond1.apply(fwd, h, &one_hot)?;
        let h = fwd.tape.relu(h);
        let h = fwd.dropout(h, self.dropout);
        self.cond2.apply(fwd, h, &one_hot)
    }
}

/// A single conditional convolution with its own parameters, usable outside
/// a full model.
#[derive(Debug, Clone)]
pub struct CondConvLayer {
    config: CondConvLayerConfig,
    condition_type: ConditionType,
    store: ParamStore,
    ids: CondConvIds,
}

impl CondConvLayer {
    pub fn random(config: CondConvLayerConfig, condition_type: ConditionType, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let ids = CondConvIds::register(
            &mut store,
            &mut rng,
            "layer",
            &config,
            condition_type.num_states(),
            1.0,
        );
        Ok(Self {
            config,
            condition_type,
            store,
            ids,
        })
    }

    pub fn config(&self) -> &CondConvLayerConfig {
        &self.config
    }

    pub fn condition_type(&self) -> ConditionType {
        self.condition_type
    }

    /// Stacked expert kernels `(N, O, C, K, K)`.
    pub fn experts(&self) -> &Tensor {
        self.store.get(self.ids.experts)
    }

    /// Stacked expert biases `(N, O)`.
    pub fn expert_biases(&self) -> &Tensor {
        self.store.get(self.ids.expert_bias)
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn routing_weights(&self, state: &DriverState) -> Result<Vec<f64>> {
        let one_hot = check_state(self.condition_type, Some(state))?.one_hot();
        let a = self.store.get(self.ids.routing_weight);
        let b = self.store.get(self.ids.routing_bias);
        let s = one_hot.len();
        Ok((0..self.ids.num_experts)
            .map(|k| {
                let z: f64 = (0..s).map(|j| a.data[k * s + j] * one_hot[j]).sum::<f64>() + b.data[k];
                tape::sigmoid(z)
            })
            .collect())
    }

    /// Applies the layer to `input (C, H, W)`; `routing` replaces the learned
    /// routing vector when given.
    pub fn forward(
        &self,
        input: &Tensor,
        state: &DriverState,
        routing: Option<&[f64]>,
    ) -> Result<Tensor> {
        let one_hot = check_state(self.condition_type, Some(state))?.one_hot();
        if input.shape.len() != 3 || input.shape[0] != self.config.in_channels {
            return Err(ModelError::Shape {
                expected: format!("({}, H, W)", self.config.in_channels),
                actual: format!("{:?}", input.shape),
            });
        }
        let mut fwd = Forward::eval(&self.store);
        fwd.routing_override = routing.map(<[f64]>::to_vec);
        let x = fwd.tape.leaf(input.clone());
        let y = self.ids.apply(&mut fwd, x, &one_hot)?;
        Ok(fwd.tape.value(y).clone())
    }
}

pub fn routing_weights(state: &DriverState, layer: &CondConvLayer) -> Result<Vec<f64>> {
    layer.routing_weights(state)
}

pub fn cond_conv(input: &Tensor, state: &DriverState, layer: &CondConvLayer) -> Result<Tensor> {
    layer.forward(input, state, None)
}
