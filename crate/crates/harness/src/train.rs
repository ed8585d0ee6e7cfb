//! Adam training with early stopping on validation KL.

use drivattn_core::AttentionMap;
use drivattn_models::{Adam, AdamConfig, AttentionModel, ParamGrads, ParamStore, SequenceBatch};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::evaluate::{GroupMetrics, MetricAccumulator};
use crate::sequences::ReweightedSampler;

/// Anything the loop can fit: parameters, a training loss with gradient
/// and evaluation-mode predictions.
pub trait Trainable {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn loss_and_grad(&self, batch: &SequenceBatch, rng: ChaCha8Rng) -> Result<(f64, ParamGrads)>;
    fn predict(&self, batch: &SequenceBatch) -> Result<Vec<AttentionMap>>;
}

impl Trainable for AttentionModel {
    fn params(&self) -> &ParamStore {
        AttentionModel::params(self)
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        AttentionModel::params_mut(self)
    }

    fn loss_and_grad(&self, batch: &SequenceBatch, rng: ChaCha8Rng) -> Result<(f64, ParamGrads)> {
        Ok(AttentionModel::loss_and_grad(self, batch, rng)?)
    }

    fn predict(&self, batch: &SequenceBatch) -> Result<Vec<AttentionMap>> {
        Ok(self.predict_batch(batch)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_opt: f64,
    pub weight_decay: f64,
    /// Sequences whose gradients are averaged per Adam step.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Sequences drawn per epoch; `None` visits each training sequence once.
    pub samples_per_epoch: Option<usize>,
    /// Draw sequences label-balanced instead of shuffling.
    pub reweighted: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps_opt: adam.epsilon,
            weight_decay: adam.weight_decay,
            batch_size: 8,
            max_epochs: 100,
            early_stop_patience: 10,
            samples_per_epoch: None,
            reweighted: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.eps_opt,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.beta1, self.beta2, self.eps_opt]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.learning_rate < 0.0 || self.weight_decay < 0.0 {
            return Err(HarnessError::Config("optimizer settings must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(HarnessError::Config("batch size and epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Sequences to train on, with the labels used for balanced sampling.
#[derive(Clone, Debug, Default)]
pub struct TrainSet<'a> {
    pub batches: Vec<SequenceBatch<'a>>,
    pub labels: Vec<String>,
}

impl<'a> TrainSet<'a> {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn frames(&self) -> usize {
        self.batches.iter().map(SequenceBatch::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_kl: f64,
    pub val_cc: Option<f64>,
    pub val_entropy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_kl: f64,
    pub stopped_early: bool,
}

/// Mean per-frame metrics of `model` over `data`.
pub fn validation_metrics<M: Trainable + ?Sized>(model: &M, data: &TrainSet) -> Result<GroupMetrics> {
    let mut acc = MetricAccumulator::default();
    for batch in &data.batches {
        let preds = model.predict(batch)?;
        for (p, gt) in preds.iter().zip(&batch.targets) {
            acc.add(p, gt)?;
        }
    }
    acc.finish("validation")
}

/// Fits `model` on `train` and restores the parameters of the epoch with
/// the lowest validation KL.
///
/// Stops after `early_stop_patience` epochs without improvement, and fails
/// with [`HarnessError::Diverged`] as soon as a loss is not finite.
pub fn train<M: Trainable + ?Sized>(
    model: &mut M,
    train: &TrainSet,
    val: &TrainSet,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(HarnessError::EmptyGroup("training or validation data".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sampler = if cfg.reweighted && train.labels.len() == train.len() {
        Some(ReweightedSampler::new(&train.labels, master.random())?)
    } else {
        None
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let per_epoch = cfg.samples_per_epoch.unwrap_or(train.len()).max(1);
    let mut adam = Adam::new(cfg.adam(), model.params());

    let mut history = TrainHistory {
        best_val_kl: f64::INFINITY,
        ..Default::default()
    };
    let mut best: Option<ParamStore> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        let picks: Vec<usize> = match sampler.as_mut() {
            Some(s) => s.take(per_epoch).collect(),
            None => {
                let mut picks = Vec::with_capacity(per_epoch);
                while picks.len() < per_epoch {
                    order.shuffle(&mut master);
                    picks.extend(order.iter().take(per_epoch - picks.len()));
                }
                picks
            }
        };
        let mut loss_sum = 0.0;
        for chunk in picks.chunks(cfg.batch_size) {
            let mut grads: Option<ParamGrads> = None;
            for &i in chunk {
                let rng = ChaCha8Rng::seed_from_u64(master.random());
                let (loss, g) = model.loss_and_grad(&train.batches[i], rng)?;
                if !loss.is_finite() || !g.is_finite() {
                    return Err(HarnessError::Diverged { epoch, loss });
                }
                loss_sum += loss;
                match grads.as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => grads = Some(g),
                }
            }
            let mut grads = grads.expect("chunks are non-empty");
            grads.scale(1.0 / chunk.len() as f64);
            adam.step(model.params_mut(), &grads);
        }
        let train_loss = loss_sum / picks.len() as f64;
        let val = validation_metrics(model, val)?;
        if !val.kl.is_finite() {
            return Err(HarnessError::Diverged { epoch, loss: val.kl });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_kl: val.kl,
            val_cc: val.cc,
            val_entropy: val.entropy,
        });
        if val.kl < history.best_val_kl {
            history.best_val_kl = val.kl;
            history.best_epoch = epoch;
            best = Some(model.params().clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    if let Some(p) = best {
        *model.params_mut() = p;
    }
    Ok(history)
}
