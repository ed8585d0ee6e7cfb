//! Dense row-major `f64` tensors and the raw convolution kernels.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data does not match shape {shape:?}"
        );
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(vec![1], vec![value])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Output spatial size of a convolution along one axis.
pub fn conv_out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

// Valid output range along one axis for kernel tap `k`.
fn tap_range(k: usize, stride: usize, pad: usize, input: usize, output: usize) -> (usize, usize) {
    // need 0 <= o*stride + k - pad < input
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let hi = if input + pad > k {
        ((input + pad - k - 1) / stride + 1).min(output)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Cross-correlation of `input` (C, H, W) with `weight` (O, C, K, K).
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Tensor {
    let (c_in, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let (c_out, wc, k) = (weight.shape[0], weight.shape[1], weight.shape[2]);
    assert_eq!(c_in, wc, "conv input channels {c_in} vs weight {wc}");
    let (oh, ow) = (conv_out_size(h, k, stride, pad), conv_out_size(w, k, stride, pad));
    let mut out = vec![0.0; c_out * oh * ow];
    for o in 0..c_out {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        if let Some(b) = bias {
            plane.iter_mut().for_each(|v| *v = b.data[o]);
        }
        for c in 0..c_in {
            let src = &input.data[c * h * w..(c + 1) * h * w];
            for kh in 0..k {
                let (r0, r1) = tap_range(kh, stride, pad, h, oh);
                for kw in 0..k {
                    let wv = weight.data[((o * c_in + c) * k + kh) * k + kw];
                    if wv == 0.0 {
                        continue;
                    }
                    let (c0, c1) = tap_range(kw, stride, pad, w, ow);
                    for r in r0..r1 {
                        let ir = r * stride + kh - pad;
                        let src_row = &src[ir * w..(ir + 1) * w];
                        let dst_row = &mut plane[r * ow..(r + 1) * ow];
                        if stride == 1 {
                            let off = kw as isize - pad as isize;
                            for cc in c0..c1 {
                                dst_row[cc] += wv * src_row[(cc as isize + off) as usize];
                            }
                        } else {
                            for cc in c0..c1 {
                                dst_row[cc] += wv * src_row[cc * stride + kw - pad];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![c_out, oh, ow], out)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
#[allow(clippy::needless_range_loop)]
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let (c_in, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let (c_out, k) = (weight.shape[0], weight.shape[2]);
    let (oh, ow) = (grad_out.shape[1], grad_out.shape[2]);
    let mut g_in = vec![0.0; input.len()];
    let mut g_w = vec![0.0; weight.len()];
    let mut g_b = vec![0.0; c_out];
    for o in 0..c_out {
        let gplane = &grad_out.data[o * oh * ow..(o + 1) * oh * ow];
        g_b[o] = gplane.iter().sum();
        for c in 0..c_in {
            let src = &input.data[c * h * w..(c + 1) * h * w];
            let gsrc = &mut g_in[c * h * w..(c + 1) * h * w];
            for kh in 0..k {
                let (r0, r1) = tap_range(kh, stride, pad, h, oh);
                for kw in 0..k {
                    let widx = ((o * c_in + c) * k + kh) * k + kw;
                    let wv = weight.data[widx];
                    let (c0, c1) = tap_range(kw, stride, pad, w, ow);
                    let mut acc = 0.0;
                    for r in r0..r1 {
                        let ir = r * stride + kh - pad;
                        let grow = &gplane[r * ow..(r + 1) * ow];
                        for cc in c0..c1 {
                            let ic = cc * stride + kw - pad;
                            let g = grow[cc];
                            acc += g * src[ir * w + ic];
                            gsrc[ir * w + ic] += wv * g;
                        }
                    }
                    g_w[widx] += acc;
                }
            }
        }
    }
    (
        Tensor::new(input.shape.clone(), g_in),
        Tensor::new(weight.shape.clone(), g_w),
        Tensor::new(vec![c_out], g_b),
    )
}

/// Numerically stable softmax over all elements.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
