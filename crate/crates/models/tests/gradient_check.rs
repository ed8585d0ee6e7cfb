mod support;

use drivattn_core::{ConditionType, DriverState, Intention};
use drivattn_models::{AttentionModel, HeadKind, SequenceBatch};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{random_frames, random_map, tiny_config};

const STEP: f64 = 1e-4;
const TOLERANCE: f64 = 1e-3;

/// Central differences for every scalar of every parameter group, compared
/// to the tape gradient by the relative error of the group's gradient
/// vector.
///
/// A perturbation that flips the sign of any ReLU input straddles a kink,
/// where the loss has no derivative for the difference quotient to
/// approximate; those coordinates are left out of the comparison and their
/// share is bounded instead.
fn check(kind: HeadKind, condition: Option<ConditionType>) {
    let cfg = tiny_config(kind, condition);
    let mut model = AttentionModel::new(cfg, 11).unwrap();
    let frames = random_frames(2, 64, 128, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let targets = [random_map(8, 16, &mut rng), random_map(8, 16, &mut rng)];
    let states = match condition {
        Some(_) => vec![
            DriverState::Intention(Intention::Left),
            DriverState::Intention(Intention::Right),
        ],
        None => Vec::new(),
    };
    let batch = || SequenceBatch {
        frames: frames.iter().collect(),
        states: states.clone(),
        extra: Vec::new(),
        targets: targets.iter().collect(),
    };

    let (_, analytic) = model.eval_loss_and_grad(&batch()).unwrap();
    let (_, base_pattern) = model.loss_with_relu_pattern(&batch()).unwrap();

    let names: Vec<String> = model.params().entries().iter().map(|e| e.name.clone()).collect();
    let (mut total, mut kinked) = (0usize, 0usize);
    for (g, name) in names.iter().enumerate() {
        let n = model.params().entries()[g].tensor.len();
        let (mut a_sq, mut fd_sq, mut diff_sq) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let orig = model.params().by_name(name).unwrap().data[i];
            model.params_mut().by_name_mut(name).unwrap().data[i] = orig + STEP;
            let (up, up_pattern) = model.loss_with_relu_pattern(&batch()).unwrap();
            model.params_mut().by_name_mut(name).unwrap().data[i] = orig - STEP;
            let (down, down_pattern) = model.loss_with_relu_pattern(&batch()).unwrap();
            model.params_mut().by_name_mut(name).unwrap().data[i] = orig;
            total += 1;
            if up_pattern != base_pattern || down_pattern != base_pattern {
                kinked += 1;
                continue;
            }
            let fd = (up - down) / (2.0 * STEP);
            let a = analytic.0[g].data[i];
            a_sq += a * a;
            fd_sq += fd * fd;
            diff_sq += (a - fd) * (a - fd);
        }
        let scale = a_sq.sqrt().max(fd_sq.sqrt());
        // Groups the loss is invariant to (the final bias, under softmax
        // shift invariance) have zero gradient; compare those absolutely.
        if scale < 1e-8 {
            assert!(diff_sq.sqrt() < 1e-8, "{kind}: group {name} should have no gradient");
            continue;
        }
        let rel = diff_sq.sqrt() / scale;
        assert!(rel < TOLERANCE, "{kind}: group {name} relative error {rel:.2e}");
    }
    assert!(
        kinked * 10 < total,
        "{kind}: {kinked} of {total} perturbations crossed a ReLU kink"
    );
}

#[test]
fn unconditioned_gradients_match_finite_differences() {
    check(HeadKind::Unconditioned, None);
}

#[test]
fn multi_branch_gradients_match_finite_differences() {
    check(HeadKind::MultiBranch, Some(ConditionType::Intention));
}

#[test]
fn cond_conv_gradients_match_finite_differences() {
    check(HeadKind::CondConv, Some(ConditionType::Intention));
}
