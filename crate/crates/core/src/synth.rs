//! Seeded procedural driving sessions with state-dependent ground-truth
//! attention and degraded webcam gaze.
//!
//! Every session is a pure function of `(seed, session_index)`. The scene is
//! a straight-ahead road with a curving vanishing point, periodic
//! intersections drawn as a crossing band, oncoming cars and a rear-mirror
//! band across the top eighth of the frame.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::map::{AttentionMap, DEFAULT_MAP_HEIGHT, DEFAULT_MAP_WIDTH};
use crate::preprocess::gaussian_blur;
use crate::scene::{SceneTensor, SCENE_CHANNELS};
use crate::session::{DrivingMode, FrameSample, SessionRecord, DEFAULT_FPS};
use crate::shift::{apply_shift, Offset};
use crate::state::{ConditionType, Distraction, DriverState, Intention};

/// Weight of the uniform floor mixed into webcam maps.
pub const WEBCAM_NOISE_FLOOR: f64 = 0.1;

/// Distance (m) within which an intersection is drawn and starts to pull
/// intention-dependent attention.
const INTERSECTION_VISIBILITY: f64 = 60.0;

/// Where the distraction contrast applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TunnelProfile {
    Everywhere,
    /// Only within `intersection_radius` of an intersection center.
    NearIntersections,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthScenarioConfig {
    pub seed: u64,
    pub n_sessions: usize,
    pub frames_per_session: usize,
    pub mode: DrivingMode,
    pub condition_type: ConditionType,
    /// Center re-concentration for distracted frames and mirror checks for
    /// attentive ones.
    pub tunnel_strength: f64,
    /// Opposite-side checking for turn intentions.
    pub cross_gaze_strength: f64,
    /// Webcam center shift in cells (row, col).
    pub webcam_shift: Offset,
    /// Per-session uniform perturbation of `webcam_shift`, in cells.
    pub webcam_shift_jitter: usize,
    /// Webcam blur sigma in cells.
    pub webcam_dispersion: f64,
    /// Meters between consecutive intersections.
    pub intersection_spacing: f64,
    pub intersection_radius: f64,
    pub tunnel_profile: TunnelProfile,
    /// Ego speed in m/s.
    pub speed: f64,
    pub fps: f64,
    pub map_height: usize,
    pub map_width: usize,
    /// Frame pixels per map cell along each axis.
    pub frame_scale: usize,
}

impl Default for SynthScenarioConfig {
    fn default() -> Self {
        Self::for_mode(DrivingMode::Manual, ConditionType::Intention)
    }
}

impl SynthScenarioConfig {
    /// Defaults for a mode/condition pair. Autopilot gets the stronger
    /// distraction contrast.
    pub fn for_mode(mode: DrivingMode, condition_type: ConditionType) -> Self {
        Self {
            seed: 0,
            n_sessions: 4,
            frames_per_session: 64,
            mode,
            condition_type,
            tunnel_strength: match mode {
                DrivingMode::Autopilot => 1.5,
                DrivingMode::Manual => 1.0,
            },
            cross_gaze_strength: 1.0,
            webcam_shift: (4, 8),
            webcam_shift_jitter: 0,
            webcam_dispersion: 1.5,
            intersection_spacing: 120.0,
            intersection_radius: 30.0,
            tunnel_profile: TunnelProfile::Everywhere,
            speed: 8.0,
            fps: DEFAULT_FPS,
            map_height: DEFAULT_MAP_HEIGHT,
            map_width: DEFAULT_MAP_WIDTH,
            frame_scale: 8,
        }
    }

    /// Small-grid variant (8x16 maps, 64x128 frames) for quick experiments.
    pub fn reduced(mut self) -> Self {
        self.map_height = 8;
        self.map_width = 16;
        self.webcam_shift = (1, 2);
        self.webcam_dispersion = 0.5;
        self
    }

    pub fn frame_height(&self) -> usize {
        self.map_height * self.frame_scale
    }

    pub fn frame_width(&self) -> usize {
        self.map_width * self.frame_scale
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::InvalidConfig(m.to_string()));
        if self.frames_per_session == 0 {
            return bad("frames_per_session must be at least 1");
        }
        if !(self.webcam_dispersion >= 0.0) {
            return bad("webcam dispersion must be non-negative");
        }
        if !(self.tunnel_strength >= 0.0) || !(self.cross_gaze_strength >= 0.0) {
            return bad("conditioning strengths must be non-negative");
        }
        if !(self.intersection_spacing > 0.0) || !(self.speed >= 0.0) || !(self.fps > 0.0) {
            return bad("spacing and fps must be positive, speed non-negative");
        }
        if self.map_height < 8 || self.map_width < 8 || self.frame_scale == 0 {
            return bad("maps must be at least 8x8 and frame_scale positive");
        }
        Ok(())
    }
}

/// Per-frame hidden variables from which scene and attention are rendered.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameLatent {
    pub position: [f64; 2],
    pub dist_ahead: f64,
    pub dist_to_intersection: f64,
    /// Horizontal vanishing-point offset in map cells.
    pub road_offset: f64,
    /// Oncoming car approach progress in [0, 1], if one is visible.
    pub car: Option<f64>,
    pub travel: f64,
}

fn session_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
        ^ 0x5DEE_CE66_D1CE_4E5B;
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Generates session `session_index` of the scenario.
pub fn generate_session(cfg: &SynthScenarioConfig, session_index: usize) -> Result<SessionRecord> {
    cfg.validate()?;
    let mut rng = session_rng(cfg.seed, session_index);
    let n = cfg.frames_per_session;
    let spacing = cfg.intersection_spacing;

    let start = rng.random_range(0.3..1.3) * spacing;
    let curve_phase = rng.random_range(0.0..2.0 * PI);
    let curve_period = rng.random_range(40.0..56.0);
    let curve_amp = 0.03 * cfg.map_width as f64;

    let jitter = cfg.webcam_shift_jitter as i64;
    let session_shift = (
        cfg.webcam_shift.0 + rng.random_range(-jitter..=jitter),
        cfg.webcam_shift.1 + rng.random_range(-jitter..=jitter),
    );

    // Oncoming car schedule: gaps then fixed-length passes.
    let mut car_progress = vec![None; n];
    let mut t = rng.random_range(0..12usize);
    while t < n {
        let len = 8;
        for k in 0..len {
            if t + k < n {
                car_progress[t + k] = Some(k as f64 / (len - 1) as f64);
            }
        }
        t += len + rng.random_range(6..20usize);
    }

    // Intentions per upcoming intersection; distraction as persistent segments.
    let n_intersections = ((start + cfg.speed * n as f64 / cfg.fps) / spacing) as usize + 2;
    let intentions: Vec<Intention> = (0..n_intersections)
        .map(|_| Intention::ALL[rng.random_range(0..3)])
        .collect();
    let mut distraction = Vec::with_capacity(n);
    let mut current = Distraction::ALL[rng.random_range(0..2)];
    let mut remaining = rng.random_range(6..20usize);
    for _ in 0..n {
        if remaining == 0 {
            current = match current {
                Distraction::Distracted => Distraction::Attentive,
                Distraction::Attentive => Distraction::Distracted,
            };
            remaining = rng.random_range(6..20usize);
        }
        distraction.push(current);
        remaining -= 1;
    }

    let mut frames = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    for i in 0..n {
        let timestamp = i as f64 / cfg.fps;
        let x = start + cfg.speed * timestamp;
        let next = (x / spacing).floor() + 1.0;
        let dist_ahead = next * spacing - x;
        let dist_behind = x - (next - 1.0) * spacing;
        let latent = FrameLatent {
            position: [x, 20.0 * (x / 150.0).sin()],
            dist_ahead,
            dist_to_intersection: dist_ahead.min(dist_behind),
            road_offset: curve_amp * (2.0 * PI * x / curve_period + curve_phase).sin(),
            car: car_progress[i],
            travel: x,
        };
        let state = match cfg.condition_type {
            ConditionType::Intention => DriverState::Intention(intentions[next as usize]),
            ConditionType::Distraction => DriverState::Distraction(distraction[i]),
        };
        let gt_map = ground_truth_map(cfg, &latent, &state);
        let webcam_map = degrade_to_webcam(&gt_map, session_shift, cfg.webcam_dispersion, &mut rng);
        let frame = render_scene(cfg, &latent, &mut rng);
        positions.push(latent.position);
        frames.push(FrameSample {
            frame,
            timestamp,
            state,
            gt_map,
            webcam_map: Some(webcam_map),
            dist_to_intersection: latent.dist_to_intersection,
            mode: cfg.mode,
        });
    }

    Ok(SessionRecord {
        session_id: format!("synth-{}-{:04}", cfg.seed, session_index),
        fps: cfg.fps,
        mode: cfg.mode,
        frames,
        ego_positions: Some(positions),
    })
}

/// All `cfg.n_sessions` sessions in index order.
pub fn generate_dataset(cfg: &SynthScenarioConfig) -> Result<Vec<SessionRecord>> {
    (0..cfg.n_sessions).map(|i| generate_session(cfg, i)).collect()
}

fn gaussian_into(
    grid: &mut [f64],
    height: usize,
    width: usize,
    center: (f64, f64),
    sigma: (f64, f64),
    weight: f64,
) {
    if weight == 0.0 {
        return;
    }
    for r in 0..height {
        let dr = (r as f64 - center.0) / sigma.0;
        for c in 0..width {
            let dc = (c as f64 - center.1) / sigma.1;
            grid[r * width + c] += weight * (-0.5 * (dr * dr + dc * dc)).exp();
        }
    }
}

/// Ground-truth attention for `state` given the frame's latent variables.
///
/// Base mass follows the vanishing point and oncoming cars; the state adds
/// an opposite-side component for turn intentions, narrows the base for
/// distracted drivers and adds rear-mirror checks for attentive ones.
pub fn ground_truth_map(
    cfg: &SynthScenarioConfig,
    latent: &FrameLatent,
    state: &DriverState,
) -> AttentionMap {
    let (h, w) = (cfg.map_height, cfg.map_width);
    let (hf, wf) = (h as f64, w as f64);
    let center = ((h / 2) as f64, (w / 2) as f64 + latent.road_offset);
    let mut base_sigma = (0.07 * hf, 0.06 * wf);
    let mut car_weight = 0.3;
    let mut grid = vec![0.0; h * w];

    let tunnel = match cfg.tunnel_profile {
        TunnelProfile::Everywhere => cfg.tunnel_strength,
        TunnelProfile::NearIntersections => {
            if latent.dist_to_intersection <= cfg.intersection_radius {
                cfg.tunnel_strength
            } else {
                0.0
            }
        }
    };
    let proximity = ((INTERSECTION_VISIBILITY - latent.dist_ahead) / 30.0).clamp(0.0, 1.0);

    match state {
        DriverState::Intention(intent) => {
            let weight = 0.6 * cfg.cross_gaze_strength * proximity;
            let (pos, sigma) = match intent {
                Intention::Left => ((center.0, center.1 + 0.28 * wf), (0.07 * hf, 0.07 * wf)),
                Intention::Right => ((center.0, center.1 - 0.28 * wf), (0.07 * hf, 0.07 * wf)),
                Intention::Forward => ((center.0 + 0.12 * hf, center.1), (0.05 * hf, 0.05 * wf)),
            };
            gaussian_into(&mut grid, h, w, pos, sigma, weight);
        }
        DriverState::Distraction(Distraction::Distracted) => {
            base_sigma = (base_sigma.0 / (1.0 + tunnel), base_sigma.1 / (1.0 + tunnel));
            car_weight /= 1.0 + tunnel;
        }
        DriverState::Distraction(Distraction::Attentive) => {
            let mirror_row = hf / 16.0 - 0.5;
            gaussian_into(
                &mut grid,
                h,
                w,
                (mirror_row.max(0.0), (w / 2) as f64),
                (0.03 * hf, 0.1 * wf),
                0.5 * tunnel,
            );
        }
    }

    gaussian_into(&mut grid, h, w, center, base_sigma, 1.0);
    if let Some(progress) = latent.car {
        let pos = (
            center.0 + progress * hf / 8.0,
            center.1 - (0.05 + 0.25 * progress) * wf,
        );
        gaussian_into(&mut grid, h, w, pos, (0.05 * hf, 0.04 * wf), car_weight);
    }
    AttentionMap::normalized(h, w, grid).expect("gaussian mixture has positive mass")
}

/// Turns a ground-truth map into a webcam-quality one: translate by
/// `shift` (plus a per-frame jitter drawn from `rng` with spread
/// `dispersion / 2`), blur with sigma `dispersion`, then mix in a uniform
/// floor of weight [`WEBCAM_NOISE_FLOOR`].
pub fn degrade_to_webcam<R: Rng + ?Sized>(
    gt: &AttentionMap,
    shift: Offset,
    dispersion: f64,
    rng: &mut R,
) -> AttentionMap {
    let (h, w) = gt.shape();
    let jitter = if dispersion > 0.0 {
        let normal = Normal::new(0.0, dispersion / 2.0).expect("positive spread");
        (
            normal.sample(rng).round() as i64,
            normal.sample(rng).round() as i64,
        )
    } else {
        (0, 0)
    };
    let shifted = apply_shift(gt, (shift.0 + jitter.0, shift.1 + jitter.1));
    let blurred = AttentionMap::normalized_or_uniform(
        h,
        w,
        gaussian_blur(shifted.values(), h, w, dispersion),
    )
    .expect("shape preserved");
    let floor = WEBCAM_NOISE_FLOOR / (h * w) as f64;
    let mixed = blurred
        .values()
        .iter()
        .map(|v| (1.0 - WEBCAM_NOISE_FLOOR) * v + floor)
        .collect();
    AttentionMap::normalized(h, w, mixed).expect("floor keeps mass positive")
}

/// Draws the procedural scene for one frame.
pub fn render_scene<R: Rng + ?Sized>(
    cfg: &SynthScenarioConfig,
    latent: &FrameLatent,
    rng: &mut R,
) -> SceneTensor {
    let (fh, fw) = (cfg.frame_height(), cfg.frame_width());
    let scale = cfg.frame_scale as f64;
    let horizon = (cfg.map_height / 2) as f64 * scale;
    let vp_x = ((cfg.map_width / 2) as f64 + latent.road_offset + 0.5) * scale;
    let mut px = vec![0.0; fh * fw * SCENE_CHANNELS];

    let band = if latent.dist_ahead < INTERSECTION_VISIBILITY {
        let near = 1.0 - latent.dist_ahead / INTERSECTION_VISIBILITY;
        let row = horizon + (fh as f64 - horizon) * near * near * 0.9 + 1.0;
        Some((row, 1.0 + 6.0 * near * scale / 8.0))
    } else {
        None
    };
    let car = latent.car.map(|p| {
        let cy = horizon + (0.5 + p * (cfg.map_height as f64 / 8.0)) * scale;
        let cx = vp_x - (0.05 + 0.25 * p) * fw as f64;
        let radius = (0.6 + 2.0 * p) * scale / 2.0;
        (cy, cx, radius)
    });
    let mirror_rows = fh / 8;
    let mirror_cols = (fw * 7 / 20, fw * 13 / 20);

    for y in 0..fh {
        let yf = y as f64 + 0.5;
        for x in 0..fw {
            let xf = x as f64 + 0.5;
            let mut rgb = if yf < horizon {
                let t = yf / horizon;
                [0.45 + 0.3 * t, 0.6 + 0.25 * t, 0.85 + 0.1 * t]
            } else {
                [0.3, 0.45, 0.25]
            };
            if yf >= horizon {
                let depth = (yf - horizon) / (fh as f64 - horizon);
                let center = vp_x + (fw as f64 / 2.0 - vp_x) * depth;
                let half = 1.0 + depth * 0.45 * fw as f64;
                if (xf - center).abs() < half {
                    rgb = [0.35, 0.35, 0.37];
                    let mark = 0.5 + 0.02 * half;
                    let dash = ((scale * 4.0 / (yf - horizon + 1.0) + latent.travel / 3.0).floor()
                        as i64)
                        .rem_euclid(2)
                        == 0;
                    if (xf - center).abs() < mark && dash {
                        rgb = [0.95, 0.95, 0.9];
                    }
                }
                if let Some((row, thick)) = band {
                    if (yf - row).abs() < thick {
                        rgb = [0.35, 0.35, 0.37];
                    } else if (yf - (row + thick + 1.0)).abs() < 1.0 {
                        rgb = [0.95, 0.95, 0.95];
                    }
                }
            }
            if let Some((cy, cx, radius)) = car {
                let (dy, dx) = ((yf - cy) / radius, (xf - cx) / (1.6 * radius));
                if dy * dy + dx * dx < 1.0 {
                    rgb = [0.85, 0.12, 0.1];
                }
            }
            if y < mirror_rows && x >= mirror_cols.0 && x < mirror_cols.1 {
                let edge = y == 0 || y + 1 == mirror_rows || x == mirror_cols.0 || x + 1 == mirror_cols.1;
                rgb = if edge { [0.08, 0.08, 0.08] } else { [0.6, 0.62, 0.68] };
            }
            let idx = (y * fw + x) * SCENE_CHANNELS;
            for c in 0..SCENE_CHANNELS {
                px[idx + c] = rgb[c] + rng.random_range(-0.02..0.02);
            }
        }
    }
    SceneTensor::from_unit_values(fh, fw, &px).expect("buffer matches frame size")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::validate_map;
    use crate::metrics::entropy;
    use crate::shift::coarse_offset;

    fn small(condition: ConditionType) -> SynthScenarioConfig {
        let mut cfg = SynthScenarioConfig::for_mode(DrivingMode::Manual, condition).reduced();
        cfg.frames_per_session = 24;
        cfg
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small(ConditionType::Intention);
        let a = generate_session(&cfg, 3).unwrap();
        let b = generate_session(&cfg, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_session(&cfg, 4).unwrap();
        assert_ne!(a.frames[0].frame, c.frames[0].frame);
        a.validate().unwrap();
    }

    #[test]
    fn zero_strengths_remove_state_dependence() {
        for kind in [ConditionType::Intention, ConditionType::Distraction] {
            let mut cfg = small(kind);
            cfg.tunnel_strength = 0.0;
            cfg.cross_gaze_strength = 0.0;
            let session = generate_session(&cfg, 0).unwrap();
            let latent = FrameLatent {
                position: [0.0, 0.0],
                dist_ahead: 10.0,
                dist_to_intersection: 10.0,
                road_offset: 0.7,
                car: Some(0.4),
                travel: 0.0,
            };
            let maps: Vec<AttentionMap> = kind
                .states()
                .iter()
                .map(|s| ground_truth_map(&cfg, &latent, s))
                .collect();
            for m in &maps[1..] {
                assert!(m.max_abs_diff(&maps[0]) < 1e-9);
            }
            assert!(session.frames.iter().all(|f| validate_map(&f.gt_map)));
        }
    }

    #[test]
    fn distracted_maps_are_sharper() {
        let cfg = SynthScenarioConfig::for_mode(DrivingMode::Autopilot, ConditionType::Distraction);
        let session = generate_session(&SynthScenarioConfig { frames_per_session: 16, ..cfg.clone() }, 1).unwrap();
        let positions = session.ego_positions.as_ref().unwrap();
        for (i, f) in session.frames.iter().enumerate() {
            let latent = FrameLatent {
                position: positions[i],
                dist_ahead: f.dist_to_intersection,
                dist_to_intersection: f.dist_to_intersection,
                road_offset: 0.0,
                car: if i % 2 == 0 { Some(0.5) } else { None },
                travel: 0.0,
            };
            let d = ground_truth_map(&cfg, &latent, &DriverState::Distraction(Distraction::Distracted));
            let a = ground_truth_map(&cfg, &latent, &DriverState::Distraction(Distraction::Attentive));
            assert!(entropy(&d) < entropy(&a));
        }
    }

    #[test]
    fn webcam_degradation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = AttentionMap::delta(32, 64, 10, 20);
        let noisy = degrade_to_webcam(&gt, (0, 0), 0.0, &mut rng);
        for (n, g) in noisy.values().iter().zip(gt.values()) {
            assert!((n - (0.9 * g + 0.1 / 2048.0)).abs() < 1e-12);
        }
        let shifted = degrade_to_webcam(&gt, (4, 8), 0.0, &mut rng);
        assert_eq!(shifted.argmax(), (14, 28));
    }

    #[test]
    fn webcam_shift_is_recovered_over_a_window() {
        let mut cfg = SynthScenarioConfig::for_mode(DrivingMode::Autopilot, ConditionType::Distraction);
        cfg.webcam_shift = (4, 8);
        cfg.frames_per_session = 64;
        let session = generate_session(&cfg, 2).unwrap();
        let maps: Vec<AttentionMap> = session
            .frames
            .iter()
            .map(|f| f.webcam_map.clone().unwrap())
            .collect();
        let (dr, dc) = coarse_offset(&maps, 12).unwrap();
        assert!((dr + 4).abs() <= 1 && (dc + 8).abs() <= 1, "got ({dr}, {dc})");
    }

    #[test]
    fn left_intention_looks_further_right() {
        let mut cfg = SynthScenarioConfig::for_mode(DrivingMode::Manual, ConditionType::Intention);
        cfg.frames_per_session = 100;
        cfg.n_sessions = 6;
        let (mut left, mut right) = (Vec::new(), Vec::new());
        let mut total = 0;
        for s in generate_dataset(&cfg).unwrap() {
            for f in s.frames {
                total += 1;
                let col = f.gt_map.center_of_mass().1;
                match f.state {
                    DriverState::Intention(Intention::Left) => left.push(col),
                    DriverState::Intention(Intention::Right) => right.push(col),
                    _ => {}
                }
            }
        }
        assert!(total >= 500 && !left.is_empty() && !right.is_empty());
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&left) > mean(&right));
    }

    #[test]
    fn zero_frames_rejected() {
        let mut cfg = small(ConditionType::Intention);
        cfg.frames_per_session = 0;
        assert!(generate_session(&cfg, 0).is_err());
    }
}
