mod support;

use drivattn_core::{ConditionType, Distraction, DriverState, Intention};
use drivattn_models::tensor::conv2d;
use drivattn_models::{
    cond_conv, multi_branch_select, routing_weights, AttentionModel, CondConvLayer,
    CondConvLayerConfig, HeadKind, HeadRegistry, ModelError, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{random_frames, tiny_config};

const LEFT: DriverState = DriverState::Intention(Intention::Left);
const RIGHT: DriverState = DriverState::Intention(Intention::Right);
const FORWARD: DriverState = DriverState::Intention(Intention::Forward);

fn layer_config(kernel: usize) -> CondConvLayerConfig {
    CondConvLayerConfig {
        num_experts: 4,
        in_channels: 3,
        out_channels: 5,
        kernel_size: kernel,
        dropout: 0.7,
    }
}

fn random_input(seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(vec![3, 6, 9], (0..3 * 6 * 9).map(|_| rng.random::<f64>() - 0.5).collect())
}

fn expert(layer: &CondConvLayer, k: usize) -> (Tensor, Tensor) {
    let e = layer.experts();
    let inner: usize = e.shape[1..].iter().product();
    let w = Tensor::new(e.shape[1..].to_vec(), e.data[k * inner..(k + 1) * inner].to_vec());
    let b = layer.expert_biases();
    let o = b.shape[1];
    (w, Tensor::new(vec![o], b.data[k * o..(k + 1) * o].to_vec()))
}

#[test]
fn zero_routing_parameters_give_one_half() {
    let mut layer = CondConvLayer::random(layer_config(3), ConditionType::Intention, 1).unwrap();
    for name in ["layer.routing.weight", "layer.routing.bias"] {
        layer.params_mut().by_name_mut(name).unwrap().data.fill(0.0);
    }
    let r = routing_weights(&LEFT, &layer).unwrap();
    assert_eq!(r, vec![0.5; 4]);
}

#[test]
fn routing_is_per_state_and_in_unit_interval() {
    let layer = CondConvLayer::random(layer_config(3), ConditionType::Intention, 2).unwrap();
    let vectors: Vec<Vec<f64>> = [LEFT, RIGHT, FORWARD]
        .iter()
        .map(|s| routing_weights(s, &layer).unwrap())
        .collect();
    for r in &vectors {
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|v| *v > 0.0 && *v < 1.0));
    }
    assert_ne!(vectors[0], vectors[1]);
    assert_ne!(vectors[1], vectors[2]);
    assert_ne!(vectors[0], vectors[2]);
}

#[test]
fn routing_rejects_other_condition_type() {
    let layer = CondConvLayer::random(layer_config(3), ConditionType::Intention, 2).unwrap();
    let err = routing_weights(&DriverState::Distraction(Distraction::Attentive), &layer);
    assert!(matches!(err, Err(ModelError::ConditionMismatch { .. })));
}

#[test]
fn one_hot_routing_selects_a_single_expert() {
    let layer = CondConvLayer::random(layer_config(3), ConditionType::Intention, 3).unwrap();
    let x = random_input(4);
    for k in 0..4 {
        let mut r = vec![0.0; 4];
        r[k] = 1.0;
        let out = layer.forward(&x, &LEFT, Some(&r)).unwrap();
        let (w, b) = expert(&layer, k);
        let plain = conv2d(&x, &w, Some(&b), 1, 1);
        assert!(out.max_abs_diff(&plain) < 1e-5);
    }
}

#[test]
fn mixing_kernels_equals_mixing_outputs() {
    let layer = CondConvLayer::random(layer_config(3), ConditionType::Intention, 5).unwrap();
    let x = random_input(6);
    for state in [LEFT, RIGHT, FORWARD] {
        let r = routing_weights(&state, &layer).unwrap();
        let mixed = cond_conv(&x, &state, &layer).unwrap();
        let mut summed = Tensor::zeros(&mixed.shape);
        for (k, rk) in r.iter().enumerate() {
            let (w, b) = expert(&layer, k);
            let mut y = conv2d(&x, &w, Some(&b), 1, 1);
            y.scale(*rk);
            summed.add_assign(&y);
        }
        assert!(mixed.max_abs_diff(&summed) < 1e-5);
    }
}

#[test]
fn identical_experts_with_unit_sum_routing_ignore_state() {
    let mut layer = CondConvLayer::random(layer_config(1), ConditionType::Intention, 7).unwrap();
    let (w, b) = expert(&layer, 0);
    let e = layer.params_mut().by_name_mut("layer.experts").unwrap();
    for k in 0..4 {
        e.data[k * w.len()..(k + 1) * w.len()].copy_from_slice(&w.data);
    }
    let eb = layer.params_mut().by_name_mut("layer.expert_bias").unwrap();
    for k in 0..4 {
        eb.data[k * b.len()..(k + 1) * b.len()].copy_from_slice(&b.data);
    }
    let x = random_input(8);
    let frozen = [0.1, 0.2, 0.3, 0.4];
    let a = layer.forward(&x, &LEFT, Some(&frozen)).unwrap();
    let c = layer.forward(&x, &FORWARD, Some(&frozen)).unwrap();
    assert_eq!(a, c);
    assert!(a.max_abs_diff(&conv2d(&x, &w, Some(&b), 1, 0)) < 1e-9);
}

#[test]
fn cond_conv_rejects_wrong_channel_count() {
    let layer = CondConvLayer::random(layer_config(3), ConditionType::Intention, 1).unwrap();
    let x = Tensor::zeros(&[2, 4, 4]);
    assert!(matches!(cond_conv(&x, &LEFT, &layer), Err(ModelError::Shape { .. })));
}

#[test]
fn branch_index_follows_encoding_order() {
    assert_eq!(multi_branch_select(&LEFT, 3).unwrap(), 0);
    assert_eq!(multi_branch_select(&FORWARD, 3).unwrap(), 2);
    let distracted = DriverState::Distraction(Distraction::Distracted);
    assert_eq!(multi_branch_select(&distracted, 2).unwrap(), 0);
    assert!(multi_branch_select(&LEFT, 2).is_err());
}

#[test]
fn registry_knows_all_three_heads() {
    let reg = HeadRegistry::default();
    assert_eq!(reg.names(), vec!["cond-conv", "multi-branch", "unconditioned"]);
    let mut cfg = tiny_config(HeadKind::Unconditioned, None);
    cfg.kind.kind = HeadKind::CondConv;
    cfg.kind.condition_type = Some(ConditionType::Intention);
    assert!(AttentionModel::with_registry(cfg.clone(), 0, &HeadRegistry::empty()).is_err());
    assert_eq!(AttentionModel::with_registry(cfg, 0, &reg).unwrap().head_name(), "cond-conv");
}

fn zero_prefix(model: &mut AttentionModel, prefix: &str) {
    let names: Vec<String> = model
        .params()
        .entries()
        .iter()
        .filter(|e| e.name.starts_with(prefix))
        .map(|e| e.name.clone())
        .collect();
    assert!(!names.is_empty());
    for n in names {
        model.params_mut().by_name_mut(&n).unwrap().data.fill(0.0);
    }
}

#[test]
fn multi_branch_left_uses_only_branch_zero() {
    let cfg = tiny_config(HeadKind::MultiBranch, Some(ConditionType::Intention));
    let model = AttentionModel::new(cfg.clone(), 21).unwrap();
    let frames = random_frames(2, 64, 128, 22);
    let states = [LEFT, LEFT];
    let base = model.predict(&frames, &states).unwrap();

    let mut probe = AttentionModel::new(cfg.clone(), 21).unwrap();
    zero_prefix(&mut probe, "head.branch1.");
    assert_eq!(probe.predict(&frames, &states).unwrap(), base);

    let mut probe = AttentionModel::new(cfg, 21).unwrap();
    zero_prefix(&mut probe, "head.branch0.");
    let changed = probe.predict(&frames, &states).unwrap();
    assert!(changed.iter().zip(&base).any(|(a, b)| a.max_abs_diff(b) > 1e-9));
}

#[test]
fn cond_conv_outputs_differ_across_states() {
    let cfg = tiny_config(HeadKind::CondConv, Some(ConditionType::Intention));
    let model = AttentionModel::new(cfg, 23).unwrap();
    let frames = random_frames(1, 64, 128, 24);
    let l = model.predict(&frames, &[LEFT]).unwrap();
    let r = model.predict(&frames, &[RIGHT]).unwrap();
    assert!(l[0].max_abs_diff(&r[0]) > 1e-9);
}

#[test]
fn unconditioned_ignores_state() {
    let cfg = tiny_config(HeadKind::Unconditioned, None);
    let model = AttentionModel::new(cfg, 25).unwrap();
    let frames = random_frames(2, 64, 128, 26);
    let l = model.predict(&frames, &[LEFT, LEFT]).unwrap();
    let r = model.predict(&frames, &[RIGHT, RIGHT]).unwrap();
    assert_eq!(l, r);
}

#[test]
fn conditioned_model_rejects_foreign_states() {
    let cfg = tiny_config(HeadKind::CondConv, Some(ConditionType::Intention));
    let model = AttentionModel::new(cfg, 27).unwrap();
    let frames = random_frames(1, 64, 128, 28);
    let err = model.predict(&frames, &[DriverState::Distraction(Distraction::Attentive)]);
    assert!(matches!(err, Err(ModelError::ConditionMismatch { .. })));
    assert!(matches!(model.predict(&frames, &[]), Err(ModelError::LengthMismatch(1, 0))));
}
