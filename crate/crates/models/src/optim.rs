use serde::{Deserialize, Serialize};

use crate::params::{ParamGrads, ParamStore};
use crate::tensor::Tensor;

/// Adam with L2 weight decay folded into the gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params
            .entries()
            .iter()
            .map(|e| Tensor::zeros(&e.tensor.shape))
            .collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamGrads) {
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            weight_decay,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        for (i, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let theta = params.get_mut(id);
            let g = &grads.0[i];
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for j in 0..theta.data.len() {
                let grad = g.data[j] + weight_decay * theta.data[j];
                m.data[j] = beta1 * m.data[j] + (1.0 - beta1) * grad;
                v.data[j] = beta2 * v.data[j] + (1.0 - beta2) * grad * grad;
                let m_hat = m.data[j] / bias1;
                let v_hat = v.data[j] / bias2;
                theta.data[j] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_matches_closed_form() {
        // f(x) = (x - 3)^2 at x = 1: g = -4. With decay d the effective gradient
        // is g + d*x. After one step m_hat = g_eff and v_hat = g_eff^2, so the
        // update is lr * g_eff / (|g_eff| + eps).
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::scalar(1.0));
        let cfg = AdamConfig {
            learning_rate: 1e-4,
            weight_decay: 0.01,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &store);
        let grads = ParamGrads(vec![Tensor::scalar(2.0 * (1.0 - 3.0))]);
        adam.step(&mut store, &grads);
        let g_eff: f64 = -4.0 + 0.01 * 1.0;
        let expected = 1.0 - 1e-4 * g_eff / (g_eff.abs() + 1e-8);
        assert!((store.get(id).data[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn zero_learning_rate_leaves_weights_untouched() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::new(vec![3], vec![0.5, -1.0, 2.0]));
        let before = store.clone();
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 0.0,
                ..AdamConfig::default()
            },
            &store,
        );
        adam.step(&mut store, &ParamGrads(vec![Tensor::new(vec![3], vec![1.0, 2.0, 3.0])]));
        assert_eq!(store, before);
    }
}
