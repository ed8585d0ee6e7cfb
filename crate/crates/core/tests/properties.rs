use drivattn_core::metrics::{cc, emd, entropy, kl, KL_EPSILON};
use drivattn_core::preprocess::{filter_events, rasterize_and_smooth, PreprocessConfig};
use drivattn_core::shift::apply_shift;
use drivattn_core::{validate_map, AttentionMap, GazeEvent, GazeRecord, GazeSource};
use proptest::prelude::*;

fn grid(h: usize, w: usize) -> impl Strategy<Value = AttentionMap> {
    prop::collection::vec(0.0f64..1.0, h * w).prop_map(move |mut v| {
        v[0] += 1e-3;
        AttentionMap::normalized(h, w, v).unwrap()
    })
}

fn event() -> impl Strategy<Value = GazeEvent> {
    prop_oneof![
        Just(GazeEvent::Fixation),
        Just(GazeEvent::Saccade),
        Just(GazeEvent::Blink)
    ]
}

proptest! {
    #[test]
    fn rasterized_maps_are_normalized(points in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 0..20)) {
        let m = rasterize_and_smooth(&points, &PreprocessConfig::default());
        prop_assert!(validate_map(&m));
    }

    #[test]
    fn rasterization_is_translation_equivariant(
        x in 0.2f64..0.7, y in 0.25f64..0.6, dr in 0i64..4, dc in 0i64..8
    ) {
        let cfg = PreprocessConfig::default();
        let (h, w) = (32.0, 64.0);
        let base = rasterize_and_smooth(&[(x, y)], &cfg);
        let moved_point = (x + dc as f64 / w, y + dr as f64 / h);
        // Only compare when the cell arithmetic is exact and both stay away from borders.
        let cell = ((y * h).floor() as i64, (x * w).floor() as i64);
        let moved_cell = ((moved_point.1 * h).floor() as i64, (moved_point.0 * w).floor() as i64);
        prop_assume!(moved_cell == (cell.0 + dr, cell.1 + dc));
        prop_assume!(cell.0 >= 7 && cell.0 + dr <= 24 && cell.1 >= 7 && cell.1 + dc <= 56);
        let moved = rasterize_and_smooth(&[moved_point], &cfg);
        let expected = apply_shift(&base, (dr, dc));
        prop_assert!(moved.max_abs_diff(&expected) < 1e-6);
    }

    #[test]
    fn filtering_is_idempotent(events in prop::collection::vec((event(), any::<bool>()), 0..30)) {
        let records: Vec<GazeRecord> = events.iter().enumerate().map(|(i, (e, valid))| GazeRecord {
            timestamp: i as f64 * 0.01, x: 0.5, y: 0.5, valid: *valid, event: *e, source: GazeSource::Webcam,
        }).collect();
        let once = filter_events(&records);
        prop_assert_eq!(filter_events(&once), once.clone());
        prop_assert!(once.iter().all(|r| r.valid && r.event == GazeEvent::Fixation));
    }

    #[test]
    fn cc_is_symmetric(p in grid(4, 6), q in grid(4, 6)) {
        let a = cc(&p, &q).unwrap();
        let b = cc(&q, &p).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&a));
    }

    #[test]
    fn entropy_is_bounded_by_uniform(p in grid(4, 8)) {
        prop_assert!(entropy(&p) <= (32f64).ln() + 1e-9);
        prop_assert!(entropy(&p) >= 0.0);
    }

    #[test]
    fn cross_entropy_gap_is_non_negative(p in grid(3, 5), q in grid(3, 5)) {
        prop_assert!(kl(&p, &q, KL_EPSILON).unwrap() >= 0.0);
    }

    #[test]
    fn shift_preserves_normalization(p in grid(6, 8), dr in -9i64..9, dc in -9i64..9) {
        prop_assert!(validate_map(&apply_shift(&p, (dr, dc))));
    }

    #[test]
    fn emd_triangle_inequality(p in grid(3, 3), q in grid(3, 3), r in grid(3, 3)) {
        let pq = emd(&p, &q).unwrap();
        let qr = emd(&q, &r).unwrap();
        let pr = emd(&p, &r).unwrap();
        prop_assert!(pr <= pq + qr + 1e-9);
    }
}

#[test]
fn uniform_is_the_entropy_maximizer() {
    let u = AttentionMap::uniform(4, 8);
    assert!((entropy(&u) - 32f64.ln()).abs() < 1e-9);
}
