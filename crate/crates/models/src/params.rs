use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered collection of named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    entries: Vec<NamedTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(self.id_of(&name).is_none(), "duplicate parameter `{name}`");
        self.entries.push(NamedTensor { name, tensor });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id_of(name).map(|id| self.get(id))
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.id_of(name).map(|id| &mut self.entries[id.0].tensor)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[NamedTensor] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads(
            self.entries
                .iter()
                .map(|e| Tensor::zeros(&e.tensor.shape))
                .collect(),
        )
    }
}

/// Gradients aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads(pub Vec<Tensor>);

impl ParamGrads {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().for_each(|t| t.scale(s));
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// He-normal initialized convolution weight of shape (out, in, k, k).
pub fn he_normal(rng: &mut ChaCha8Rng, out: usize, inp: usize, k: usize, gain: f64) -> Tensor {
    let std = gain * (2.0 / (inp * k * k) as f64).sqrt();
    normal_tensor(rng, &[out, inp, k, k], std)
}

pub fn normal_tensor(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect())
}

/// One forward pass: a tape, the parameter snapshot it reads, and the
/// training-time randomness for dropout.
pub struct Forward<'p> {
    pub tape: Tape,
    params: &'p ParamStore,
    bound: Vec<Option<Var>>,
    rng: Option<ChaCha8Rng>,
    /// Replaces every conditional-convolution routing vector when set.
    pub routing_override: Option<Vec<f64>>,
    /// Zeroes the scene features before they reach the decoder.
    pub ablate_scene: bool,
}

impl<'p> Forward<'p> {
    pub fn eval(params: &'p ParamStore) -> Self {
        Self {
            tape: Tape::new(),
            params,
            bound: vec![None; params.len()],
            rng: None,
            routing_override: None,
            ablate_scene: false,
        }
    }

    /// Training mode: dropout masks are drawn from `rng`.
    pub fn train(params: &'p ParamStore, rng: ChaCha8Rng) -> Self {
        Self {
            rng: Some(rng),
            ..Self::eval(params)
        }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.leaf(self.params.get(id).clone());
        self.bound[id.0] = Some(v);
        v
    }

    /// Inverted dropout; the identity outside training.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Var {
        let Some(rng) = self.rng.as_mut() else {
            return x;
        };
        if rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let n = self.tape.value(x).len();
        let mask = (0..n)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        self.tape.mask(x, mask)
    }

    /// Gradient of `root` for every parameter; unused ones are zero.
    pub fn param_grads(&self, root: Var) -> ParamGrads {
        let mut grads = self.tape.backward(root);
        let mut out = self.params.zero_grads();
        for (i, slot) in self.bound.iter().enumerate() {
            if let Some(v) = slot {
                if let Some(g) = grads.take(*v) {
                    out.0[i] = g;
                }
            }
        }
        out
    }
}
