mod support;

use drivattn_core::metrics::emd;
use drivattn_core::AttentionMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::transport_lp::emd_by_lp;

fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> AttentionMap {
    // Sparse-ish masses exercise degenerate transport plans.
    let values: Vec<f64> = (0..h * w)
        .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() })
        .collect();
    AttentionMap::normalized_or_uniform(h, w, values).unwrap()
}

#[test]
fn hand_built_cases_match_lp() {
    // 1x3 case: moving (0.5, 0.5, 0) onto (0, 0.5, 0.5) costs exactly one unit.
    assert!((emd_by_lp(&[0.5, 0.5, 0.0], &[0.0, 0.5, 0.5], 3) - 1.0).abs() < 1e-12);
    assert!((emd_by_lp(&[1.0, 0.0], &[0.0, 1.0], 2) - 1.0).abs() < 1e-12);
}

#[test]
fn flow_solver_matches_lp_on_random_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let p = random_map(&mut rng, 3, 4);
        let q = random_map(&mut rng, 3, 4);
        let fast = emd(&p, &q).unwrap();
        let slow = emd_by_lp(p.values(), q.values(), 4);
        assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
    }
}

#[test]
fn emd_is_symmetric_and_zero_on_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let p = random_map(&mut rng, 4, 4);
        let q = random_map(&mut rng, 4, 4);
        assert!((emd(&p, &q).unwrap() - emd(&q, &p).unwrap()).abs() < 1e-9);
        assert_eq!(emd(&p, &p).unwrap(), 0.0);
        assert!(emd(&p, &q).unwrap() > 0.0);
    }
}

#[test]
fn full_size_grid_after_downsampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_map(&mut rng, 32, 64);
    let q = random_map(&mut rng, 32, 64);
    let dp = drivattn_core::metrics::downsample_map(&p, 4).unwrap();
    let dq = drivattn_core::metrics::downsample_map(&q, 4).unwrap();
    let d = emd(&dp, &dq).unwrap();
    assert!(d.is_finite() && d > 0.0);
}
