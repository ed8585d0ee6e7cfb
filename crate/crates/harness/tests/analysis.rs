mod support;

use std::collections::BTreeMap;

use drivattn_core::metrics::entropy;
use drivattn_core::{AttentionMap, ConditionType, Distraction, DriverState, FrameSample};
use drivattn_harness::analysis::{
    aggregate_risk, location_uniform_frames, median_filter, read_risk_table, timestamp_risks, write_risk_table,
};
use drivattn_harness::{condition_heatmaps, risk_map, ModelPredictor, Predictor, RiskConfig};
use drivattn_models::{AttentionModel, HeadKind};

#[test]
fn distracted_heatmap_is_more_concentrated() {
    let sessions = support::small_sessions(ConditionType::Distraction, 6, 200, 1);
    let maps = condition_heatmaps(&sessions, ConditionType::Distraction, 2.0).unwrap();
    assert_eq!(maps.len(), 2);
    let h = |l: &str| entropy(&maps[l].mean);
    assert!(h("distracted") < h("attentive"), "{} vs {}", h("distracted"), h("attentive"));
    for m in maps.values() {
        assert!(m.clipped.values.iter().all(|v| (0.0..=0.05).contains(v)));
    }
}

#[test]
fn single_condition_gives_one_heatmap() {
    let mut sessions = support::small_sessions(ConditionType::Distraction, 2, 40, 2);
    for f in sessions.iter_mut().flat_map(|s| s.frames.iter_mut()) {
        f.state = DriverState::Distraction(Distraction::Attentive);
    }
    let maps = condition_heatmaps(&sessions, ConditionType::Distraction, 1.0).unwrap();
    assert_eq!(maps.keys().collect::<Vec<_>>(), vec!["attentive"]);
    assert!(condition_heatmaps(&sessions, ConditionType::Intention, 1.0).is_err());
}

#[test]
fn huge_stride_samples_one_frame_per_session() {
    let sessions = support::small_sessions(ConditionType::Distraction, 3, 50, 3);
    for s in &sessions {
        assert_eq!(location_uniform_frames(s, 1e9), vec![0]);
    }
    let maps = condition_heatmaps(&sessions, ConditionType::Distraction, 1e9).unwrap();
    assert_eq!(maps.values().map(|m| m.frames).sum::<usize>(), 3);
}

fn field() -> BTreeMap<(i64, i64), f64> {
    (0..6)
        .flat_map(|x| (0..3).map(move |y| ((x, y), ((x * 7 + y * 3) % 5) as f64)))
        .collect()
}

#[test]
fn unit_median_window_is_identity_and_idempotent() {
    let f = field();
    let once = median_filter(&f, 1).unwrap();
    assert_eq!(once, f);
    assert_eq!(median_filter(&once, 1).unwrap(), once);
    assert!(median_filter(&f, 2).is_err());
    assert!(median_filter(&f, 0).is_err());
}

#[test]
fn median_window_removes_an_isolated_spike() {
    let mut f: BTreeMap<(i64, i64), f64> = (0..5).flat_map(|x| (0..5).map(move |y| ((x, y), 1.0))).collect();
    f.insert((2, 2), 100.0);
    let g = median_filter(&f, 3).unwrap();
    assert_eq!(g[&(2, 2)], 1.0);
}

fn degenerate_model() -> AttentionModel {
    let cfg = support::tiny_config(HeadKind::CondConv, Some(ConditionType::Distraction));
    let mut model = AttentionModel::new(cfg, 4).unwrap();
    // Routing that ignores the state makes both conditioned outputs equal.
    for layer in ["head.cond1", "head.cond2"] {
        let w = model.params_mut().by_name_mut(&format!("{layer}.routing.weight")).unwrap();
        w.data.iter_mut().for_each(|v| *v = 0.0);
    }
    model
}

#[test]
fn degenerate_model_has_zero_risk_everywhere() {
    let sessions = support::small_sessions(ConditionType::Distraction, 2, 60, 5);
    let predictor = ModelPredictor::new(degenerate_model()).unwrap();
    let cfg = RiskConfig {
        downsample_factor: 2,
        ..RiskConfig::default()
    };
    let cells = risk_map(&predictor, &sessions, &cfg).unwrap();
    assert!(!cells.is_empty());
    assert!(cells.iter().all(|c| c.risk == 0.0 && c.cell_mean == 0.0));
}

#[test]
fn untrained_model_risks_are_non_negative_and_deterministic() {
    let sessions = support::small_sessions(ConditionType::Distraction, 1, 40, 6);
    let cfg = support::tiny_config(HeadKind::MultiBranch, Some(ConditionType::Distraction));
    let p = ModelPredictor::new(AttentionModel::new(cfg, 1).unwrap()).unwrap();
    let a = timestamp_risks(&p, &sessions, 2).unwrap();
    let b = timestamp_risks(&p, &sessions, 2).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|r| r.risk >= 0.0));
    assert!(a.iter().any(|r| r.risk > 0.0));
}

#[test]
fn risk_needs_distraction_conditioning_and_positions() {
    let mut sessions = support::small_sessions(ConditionType::Distraction, 1, 10, 7);
    let cfg = support::tiny_config(HeadKind::CondConv, Some(ConditionType::Intention));
    let intention = ModelPredictor::new(AttentionModel::new(cfg, 0).unwrap()).unwrap();
    assert!(risk_map(&intention, &sessions, &RiskConfig::default()).is_err());
    sessions[0].ego_positions = None;
    let p = ModelPredictor::new(degenerate_model()).unwrap();
    let err = risk_map(&p, &sessions, &RiskConfig::default()).unwrap_err();
    assert!(err.to_string().contains("ego positions"), "{err}");
}

/// Distracted predictions shift the peak only close to intersections.
struct NearIntersectionShift;

impl Predictor for NearIntersectionShift {
    fn name(&self) -> &str {
        "near-intersection-shift"
    }

    fn condition_type(&self) -> Option<ConditionType> {
        Some(ConditionType::Distraction)
    }

    fn predict(&self, frames: &[FrameSample], states: &[DriverState]) -> drivattn_harness::Result<Vec<AttentionMap>> {
        Ok(frames
            .iter()
            .zip(states)
            .map(|(f, s)| {
                let moved = matches!(s, DriverState::Distraction(Distraction::Distracted))
                    && f.dist_to_intersection <= 30.0;
                support::delta(8, 16, 4, if moved { 12 } else { 8 })
            })
            .collect())
    }
}

#[test]
fn localized_divergence_shows_up_at_intersection_cells() {
    let sessions = support::small_sessions(ConditionType::Distraction, 3, 240, 8);
    let cells = risk_map(&NearIntersectionShift, &sessions, &RiskConfig::default()).unwrap();
    let mean = |pred: &dyn Fn(f64) -> bool| {
        let v: Vec<f64> = cells
            .iter()
            .filter(|c| pred(c.min_dist_to_intersection))
            .map(|c| c.risk)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let near = mean(&|d| d <= 10.0);
    let far = mean(&|d| d > 45.0);
    assert!(near > 0.5 && far < 1e-12, "near {near}, far {far}");
}

#[test]
fn risk_table_round_trips_with_hash_header() {
    let sessions = support::small_sessions(ConditionType::Distraction, 1, 80, 9);
    let points = timestamp_risks(&NearIntersectionShift, &sessions, 4).unwrap();
    let cells = aggregate_risk(&points, &RiskConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_risk_table(&cells, "0123456789abcdef", &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("# config_hash=0123456789abcdef\nposition_x,position_y,risk\n"));
    let rows = read_risk_table(&text).unwrap();
    assert_eq!(rows.len(), cells.len());
    for (r, c) in rows.iter().zip(&cells) {
        assert_eq!(*r, [c.position[0], c.position[1], c.risk]);
    }
    // Output is ordered by position.
    assert!(cells.windows(2).all(|w| w[0].cell < w[1].cell));
}
