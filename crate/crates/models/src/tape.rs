//! Reverse-mode differentiation over a flat recording of tensor ops.
//!
//! A fresh [`Tape`] is built for every forward pass; [`Tape::backward`]
//! sweeps it once in reverse and returns the gradient of a scalar root for
//! every recorded node.

use crate::tensor::{conv2d, conv2d_backward, softmax, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    },
    Add(Var, Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Scale(Var, f64),
    Mask(Var, Vec<f64>),
    Concat(Vec<Var>),
    GlobalMean(Var),
    MatVec { matrix: Var, vector: Var },
    Mix { weights: Var, stack: Var },
    SoftmaxCrossEntropy { logits: Var, target: Vec<f64> },
    Sum(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Sign of every ReLU input recorded so far. Two evaluations with equal
    /// patterns lie on the same linear piece of every ReLU.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(&self.nodes[x.0].value.data),
                _ => None,
            })
            .flat_map(|d| d.iter().map(|v| *v > 0.0))
            .collect()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Var {
        let out = conv2d(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            stride,
            pad,
        );
        self.push(out, Op::Conv2d { input, weight, bias, stride, pad })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = v.tanh());
        self.push(out, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        self.push(out, Op::Sigmoid(x))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut out = self.value(x).clone();
        out.scale(s);
        self.push(out, Op::Scale(x, s))
    }

    /// Element-wise product with a constant mask (dropout).
    pub fn mask(&mut self, x: Var, mask: Vec<f64>) -> Var {
        let mut out = self.value(x).clone();
        assert_eq!(out.len(), mask.len());
        for (v, m) in out.data.iter_mut().zip(&mask) {
            *v *= m;
        }
        self.push(out, Op::Mask(x, mask))
    }

    /// Stacks (C_i, H, W) tensors along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let first = self.value(parts[0]);
        let (h, w) = (first.shape[1], first.shape[2]);
        let mut channels = 0;
        let mut data = Vec::new();
        for p in parts {
            let t = self.value(*p);
            assert_eq!((t.shape[1], t.shape[2]), (h, w), "concat spatial mismatch");
            channels += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        self.push(Tensor::new(vec![channels, h, w], data), Op::Concat(parts.to_vec()))
    }

    /// Replaces every plane of a (C, H, W) tensor by its spatial mean.
    pub fn global_mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let plane = t.shape[1] * t.shape[2];
        let mut out = t.clone();
        for chunk in out.data.chunks_mut(plane) {
            let mean = chunk.iter().sum::<f64>() / plane as f64;
            chunk.fill(mean);
        }
        self.push(out, Op::GlobalMean(x))
    }

    /// `matrix (N, K) * vector (K)`.
    pub fn matvec(&mut self, matrix: Var, vector: Var) -> Var {
        let (m, v) = (self.value(matrix), self.value(vector));
        let (n, k) = (m.shape[0], m.shape[1]);
        assert_eq!(v.len(), k);
        let out: Vec<f64> = (0..n)
            .map(|i| (0..k).map(|j| m.data[i * k + j] * v.data[j]).sum())
            .collect();
        self.push(Tensor::new(vec![n], out), Op::MatVec { matrix, vector })
    }

    /// `sum_k weights[k] * stack[k]` where `stack` has leading axis N.
    pub fn mix(&mut self, weights: Var, stack: Var) -> Var {
        let (wt, st) = (self.value(weights), self.value(stack));
        let n = st.shape[0];
        assert_eq!(wt.len(), n);
        let inner = st.len() / n;
        let mut out = vec![0.0; inner];
        for k in 0..n {
            let r = wt.data[k];
            for (o, s) in out.iter_mut().zip(&st.data[k * inner..(k + 1) * inner]) {
                *o += r * s;
            }
        }
        let shape = st.shape[1..].to_vec();
        self.push(Tensor::new(shape, out), Op::Mix { weights, stack })
    }

    /// `-sum_i target_i * log softmax(logits)_i` over all logits.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: Vec<f64>) -> Var {
        let l = self.value(logits);
        assert_eq!(l.len(), target.len());
        let max = l.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + l.data.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss: f64 = l
            .data
            .iter()
            .zip(&target)
            .map(|(v, t)| -t * (v - log_z))
            .sum();
        self.push(Tensor::scalar(loss), Op::SoftmaxCrossEntropy { logits, target })
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let total = parts.iter().map(|p| self.value(*p).data[0]).sum();
        self.push(Tensor::scalar(total), Op::Sum(parts.to_vec()))
    }

    /// Gradient of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Conv2d { input, weight, bias, stride, pad } => {
                    let (gi, gw, gb) =
                        conv2d_backward(self.value(*input), self.value(*weight), &g, *stride, *pad);
                    accumulate(&mut grads, *input, gi);
                    accumulate(&mut grads, *weight, gw);
                    if let Some(b) = bias {
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Relu(x) => {
                    let mut out = g.clone();
                    for (o, v) in out.data.iter_mut().zip(&self.value(*x).data) {
                        if *v <= 0.0 {
                            *o = 0.0;
                        }
                    }
                    accumulate(&mut grads, *x, out);
                }
                Op::Tanh(x) => {
                    let mut out = g.clone();
                    for (o, y) in out.data.iter_mut().zip(&node.value.data) {
                        *o *= 1.0 - y * y;
                    }
                    accumulate(&mut grads, *x, out);
                }
                Op::Sigmoid(x) => {
                    let mut out = g.clone();
                    for (o, y) in out.data.iter_mut().zip(&node.value.data) {
                        *o *= y * (1.0 - y);
                    }
                    accumulate(&mut grads, *x, out);
                }
                Op::Scale(x, s) => {
                    let mut out = g.clone();
                    out.scale(*s);
                    accumulate(&mut grads, *x, out);
                }
                Op::Mask(x, mask) => {
                    let mut out = g.clone();
                    for (o, m) in out.data.iter_mut().zip(mask) {
                        *o *= m;
                    }
                    accumulate(&mut grads, *x, out);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let shape = self.value(*p).shape.clone();
                        let n = self.value(*p).len();
                        let slice = g.data[offset..offset + n].to_vec();
                        offset += n;
                        accumulate(&mut grads, *p, Tensor::new(shape, slice));
                    }
                }
                Op::GlobalMean(x) => {
                    let plane = g.shape[1] * g.shape[2];
                    let mut out = g.clone();
                    for chunk in out.data.chunks_mut(plane) {
                        let mean = chunk.iter().sum::<f64>() / plane as f64;
                        chunk.fill(mean);
                    }
                    accumulate(&mut grads, *x, out);
                }
                Op::MatVec { matrix, vector } => {
                    let (m, v) = (self.value(*matrix), self.value(*vector));
                    let (n, k) = (m.shape[0], m.shape[1]);
                    let mut gm = Tensor::zeros(&m.shape);
                    let mut gv = Tensor::zeros(&v.shape);
                    for r in 0..n {
                        for c in 0..k {
                            gm.data[r * k + c] = g.data[r] * v.data[c];
                            gv.data[c] += g.data[r] * m.data[r * k + c];
                        }
                    }
                    accumulate(&mut grads, *matrix, gm);
                    accumulate(&mut grads, *vector, gv);
                }
                Op::Mix { weights, stack } => {
                    let (wt, st) = (self.value(*weights), self.value(*stack));
                    let n = st.shape[0];
                    let inner = st.len() / n;
                    let mut gw = Tensor::zeros(&wt.shape);
                    let mut gs = Tensor::zeros(&st.shape);
                    for k in 0..n {
                        let block = &st.data[k * inner..(k + 1) * inner];
                        gw.data[k] = block.iter().zip(&g.data).map(|(s, gg)| s * gg).sum();
                        for (o, gg) in gs.data[k * inner..(k + 1) * inner].iter_mut().zip(&g.data) {
                            *o = wt.data[k] * gg;
                        }
                    }
                    accumulate(&mut grads, *weights, gw);
                    accumulate(&mut grads, *stack, gs);
                }
                Op::SoftmaxCrossEntropy { logits, target } => {
                    let l = self.value(*logits);
                    let p = softmax(&l.data);
                    let mass: f64 = target.iter().sum();
                    let data = p
                        .iter()
                        .zip(target)
                        .map(|(pi, ti)| g.data[0] * (pi * mass - ti))
                        .collect();
                    accumulate(&mut grads, *logits, Tensor::new(l.shape.clone(), data));
                }
                Op::Sum(parts) => {
                    for p in parts {
                        accumulate(&mut grads, *p, g.clone());
                    }
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }
}
