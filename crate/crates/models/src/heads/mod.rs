//! Conditioning strategies for the decoder head.
//!
//! Each strategy implements [`ConditioningHead`] and is constructed through a
//! [`HeadRegistry`] keyed by name (`unconditioned`, `multi-branch`,
//! `cond-conv`), so models, checkpoints and the command line all select a
//! head the same way.

mod cond_conv;
mod multi_branch;
mod unconditioned;

use std::collections::BTreeMap;
use std::fmt;

use drivattn_core::{ConditionType, DriverState};
use rand_chacha::ChaCha8Rng;

use crate::config::{HeadKind, ModelConfig};
use crate::encoder::Conv;
use crate::error::{ModelError, Result};
use crate::params::{Forward, ParamStore};
use crate::tape::Var;

pub use cond_conv::{cond_conv, routing_weights, CondConvHead, CondConvLayer};
pub use multi_branch::{multi_branch_select, MultiBranchHead};
pub use unconditioned::UnconditionedHead;

/// Everything a head factory needs to lay out its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadSpec {
    pub in_channels: usize,
    pub decoder_channels: usize,
    pub condition_type: Option<ConditionType>,
    pub num_experts: usize,
    pub dropout: f64,
    pub cond_dropout: f64,
}

impl HeadSpec {
    pub fn from_model(cfg: &ModelConfig) -> Self {
        Self {
            in_channels: cfg.head_in_channels(),
            decoder_channels: cfg.decoder_channels,
            condition_type: cfg.kind.condition_type,
            num_experts: cfg.num_experts,
            dropout: cfg.dropout,
            cond_dropout: cfg.cond_dropout,
        }
    }

    fn require_condition(&self, head: &str) -> Result<ConditionType> {
        self.condition_type
            .ok_or_else(|| ModelError::Config(format!("{head} head needs a condition type")))
    }
}

/// Turns the decoder input `(C, h, w)` into a single logit plane `(1, h, w)`,
/// using the driver state if the strategy is conditioned.
pub trait ConditioningHead: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn condition_type(&self) -> Option<ConditionType>;

    fn forward(&self, fwd: &mut Forward, input: Var, state: Option<&DriverState>) -> Result<Var>;
}

pub type HeadFactory =
    fn(&HeadSpec, &mut ParamStore, &mut ChaCha8Rng) -> Result<Box<dyn ConditioningHead>>;

#[derive(Clone)]
pub struct HeadRegistry {
    factories: BTreeMap<String, HeadFactory>,
}

impl fmt::Debug for HeadRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl Default for HeadRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register(HeadKind::Unconditioned.as_str(), UnconditionedHead::build);
        reg.register(HeadKind::MultiBranch.as_str(), MultiBranchHead::build);
        reg.register(HeadKind::CondConv.as_str(), CondConvHead::build);
        reg
    }
}

impl HeadRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: HeadFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(
        &self,
        name: &str,
        spec: &HeadSpec,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Box<dyn ConditioningHead>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| ModelError::UnknownHead(name.to_string()))?;
        factory(spec, store, rng)
    }
}

/// conv3x3 -> ReLU -> dropout -> conv3x3 -> ReLU -> dropout -> conv1x1.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Decoder {
    conv0: Conv,
    conv1: Conv,
    conv2: Conv,
    dropout: f64,
}

impl Decoder {
    pub(crate) fn new(spec: &HeadSpec, store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str) -> Self {
        let d = spec.decoder_channels;
        Self {
            conv0: Conv::new(store, rng, &format!("{prefix}.conv0"), spec.in_channels, d, 3, 1.0),
            conv1: Conv::new(store, rng, &format!("{prefix}.conv1"), d, d, 3, 1.0),
            conv2: Conv::new(store, rng, &format!("{prefix}.conv2"), d, 1, 1, 0.1),
            dropout: spec.dropout,
        }
    }

    pub(crate) fn forward(&self, fwd: &mut Forward, x: Var) -> Var {
        let h = self.conv0.apply(fwd, x);
        let h = fwd.tape.relu(h);
        let h = fwd.dropout(h, self.dropout);
        let h = self.conv1.apply(fwd, h);
        let h = fwd.tape.relu(h);
        let h = fwd.dropout(h, self.dropout);
        self.conv2.apply(fwd, h)
    }
}

pub(crate) fn check_state(
    expected: ConditionType,
    state: Option<&DriverState>,
) -> Result<DriverState> {
    let state = state.ok_or_else(|| ModelError::Config("conditioned head needs a driver state".into()))?;
    if state.condition_type() != expected {
        return Err(ModelError::ConditionMismatch {
            expected: expected.to_string(),
            actual: state.condition_type(),
        });
    }
    Ok(*state)
}
