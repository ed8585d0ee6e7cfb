//! Glue between sessions, sequences and the training loop.

use drivattn_core::{AttentionMap, SessionRecord};
use drivattn_models::calibration::{coarse_center, webcam_maps};
use drivattn_models::{calibrate_pipeline, CalibrationConfig, CalibrationNet, ModelConfig, SequenceBatch};

use crate::error::Result;
use crate::evaluate::{GroupMetrics, MetricAccumulator};
use crate::sequences::SequenceRef;
use crate::train::{train, TrainConfig, TrainHistory, TrainSet};

/// Scene, state and ground-truth batches for the selected sequences.
pub fn attention_set<'a>(
    sessions: &'a [SessionRecord],
    sequences: &[SequenceRef],
    indices: &[usize],
) -> TrainSet<'a> {
    let mut set = TrainSet::default();
    for &i in indices {
        let seq = &sequences[i];
        let frames = &sessions[seq.session].frames[seq.range()];
        set.batches.push(SequenceBatch {
            frames: frames.iter().map(|f| &f.frame).collect(),
            states: frames.iter().map(|f| f.state).collect(),
            extra: Vec::new(),
            targets: frames.iter().map(|f| &f.gt_map).collect(),
        });
        set.labels.push(seq.label.clone());
    }
    set
}

/// Per-session input of the fine network: coarse-centered webcam maps when
/// `cfg.coarse` is set, raw ones otherwise. Computed causally over the
/// whole session, as at inference.
pub fn calibration_inputs(sessions: &[SessionRecord], cfg: &CalibrationConfig) -> Result<Vec<Vec<AttentionMap>>> {
    sessions
        .iter()
        .map(|s| {
            let raw = webcam_maps(s)?;
            Ok(if cfg.coarse { coarse_center(&raw, cfg)? } else { raw })
        })
        .collect()
}

pub fn calibration_set<'a>(
    sessions: &'a [SessionRecord],
    inputs: &[Vec<AttentionMap>],
    sequences: &[SequenceRef],
    indices: &[usize],
) -> TrainSet<'a> {
    let mut set = attention_set(sessions, sequences, indices);
    for (batch, &i) in set.batches.iter_mut().zip(indices) {
        let seq = &sequences[i];
        batch.states.clear();
        batch.extra = inputs[seq.session][seq.range()].to_vec();
    }
    set
}

/// Trains a fine calibration network on the input variant selected by
/// `calib.coarse`.
pub fn train_calibration_net(
    sessions: &[SessionRecord],
    sequences: &[SequenceRef],
    train_idx: &[usize],
    val_idx: &[usize],
    model: ModelConfig,
    calib: &CalibrationConfig,
    cfg: &TrainConfig,
) -> Result<(CalibrationNet, TrainHistory)> {
    let inputs = calibration_inputs(sessions, calib)?;
    let train_set = calibration_set(sessions, &inputs, sequences, train_idx);
    let val_set = calibration_set(sessions, &inputs, sequences, val_idx);
    let mut net = CalibrationNet::new(model, cfg.seed)?;
    let history = train(net.model_mut(), &train_set, &val_set, cfg)?;
    Ok((net, history))
}

/// Metrics of one ablation cell: the calibrated webcam maps of every
/// session against ground truth.
pub fn evaluate_calibration(
    sessions: &[SessionRecord],
    cfg: &CalibrationConfig,
    net: Option<&CalibrationNet>,
) -> Result<GroupMetrics> {
    let mut acc = MetricAccumulator::default();
    for s in sessions {
        let maps = calibrate_pipeline(s, cfg, net)?;
        for (m, f) in maps.iter().zip(&s.frames) {
            acc.add(m, &f.gt_map)?;
        }
    }
    acc.finish("calibration")
}
