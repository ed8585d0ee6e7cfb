//! Condition-wise cumulative heatmaps and the attention-divergence risk map.

use std::collections::BTreeMap;
use std::io::Write;

use drivattn_core::metrics::{downsample_map, emd};
use drivattn_core::preprocess::{cumulative_heatmap, mean_map, CUMULATIVE_CLIP};
use drivattn_core::{AttentionMap, ConditionType, Distraction, DriverState, Grid, SessionRecord};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::predictor::Predictor;

/// Frames of one condition value, sampled evenly along the route.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionHeatmap {
    pub label: String,
    pub frames: usize,
    /// Unclipped mean of the sampled maps.
    pub mean: AttentionMap,
    /// Mean clipped to `[0, 0.05]` for display.
    pub clipped: Grid,
}

/// Indices of frames at least `stride` meters of travel apart, starting with
/// the first frame. Without ego positions every frame is kept.
pub fn location_uniform_frames(session: &SessionRecord, stride: f64) -> Vec<usize> {
    let Some(pos) = &session.ego_positions else {
        return (0..session.frames.len()).collect();
    };
    let mut out = Vec::new();
    let mut travelled = 0.0;
    let mut last = None;
    for i in 0..pos.len() {
        if i > 0 {
            let (dx, dy) = (pos[i][0] - pos[i - 1][0], pos[i][1] - pos[i - 1][1]);
            travelled += dx.hypot(dy);
        }
        if last.is_none_or(|l| travelled - l >= stride) {
            out.push(i);
            last = Some(travelled);
        }
    }
    out
}

/// Buckets location-sampled frames by state and aggregates each bucket.
pub fn condition_heatmaps(
    sessions: &[SessionRecord],
    condition: ConditionType,
    stride: f64,
) -> Result<BTreeMap<String, ConditionHeatmap>> {
    let mut buckets: BTreeMap<String, Vec<AttentionMap>> = BTreeMap::new();
    for s in sessions {
        for i in location_uniform_frames(s, stride) {
            let f = &s.frames[i];
            if f.state.condition_type() == condition {
                buckets.entry(f.state.label().to_string()).or_default().push(f.gt_map.clone());
            }
        }
    }
    if buckets.is_empty() {
        return Err(HarnessError::EmptyGroup(format!("{condition} heatmaps")));
    }
    buckets
        .into_iter()
        .map(|(label, maps)| {
            let heat = ConditionHeatmap {
                frames: maps.len(),
                mean: mean_map(&maps)?,
                clipped: cumulative_heatmap(&maps, CUMULATIVE_CLIP)?,
                label: label.clone(),
            };
            Ok((label, heat))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    /// Pooling factor applied to both maps before the transport distance.
    pub downsample_factor: usize,
    /// Side of the square median window, in world cells (odd).
    pub neighborhood: usize,
    /// Side of a world cell in meters.
    pub cell_size: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            downsample_factor: 4,
            neighborhood: 3,
            cell_size: 5.0,
        }
    }
}

/// Divergence between attentive and distracted predictions at one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub session: usize,
    pub frame: usize,
    pub position: [f64; 2],
    pub risk: f64,
    pub dist_to_intersection: f64,
}

/// One world cell of the filtered risk map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCell {
    pub cell: (i64, i64),
    /// Cell center in meters.
    pub position: [f64; 2],
    /// Median over the neighborhood of per-cell mean risk.
    pub risk: f64,
    /// Mean risk of the points in this cell alone.
    pub cell_mean: f64,
    pub samples: usize,
    pub min_dist_to_intersection: f64,
}

/// Per-frame transport distance between the predictions under the
/// attentive and the distracted state.
pub fn timestamp_risks(
    predictor: &dyn Predictor,
    sessions: &[SessionRecord],
    downsample_factor: usize,
) -> Result<Vec<RiskPoint>> {
    if predictor.condition_type() != Some(ConditionType::Distraction) {
        return Err(HarnessError::Config(format!(
            "risk maps need a distraction-conditioned predictor, `{}` is not",
            predictor.name()
        )));
    }
    let attentive = DriverState::Distraction(Distraction::Attentive);
    let distracted = DriverState::Distraction(Distraction::Distracted);
    let mut out = Vec::new();
    for (si, s) in sessions.iter().enumerate() {
        let pos = s
            .ego_positions
            .as_ref()
            .ok_or_else(|| HarnessError::Config(format!("session {} has no ego positions", s.session_id)))?;
        if s.frames.is_empty() {
            continue;
        }
        let a = predictor.predict(&s.frames, &vec![attentive; s.frames.len()])?;
        let d = predictor.predict(&s.frames, &vec![distracted; s.frames.len()])?;
        for (i, (pa, pd)) in a.iter().zip(&d).enumerate() {
            let risk = emd(
                &downsample_map(pa, downsample_factor)?,
                &downsample_map(pd, downsample_factor)?,
            )?;
            out.push(RiskPoint {
                session: si,
                frame: i,
                position: pos[i],
                risk,
                dist_to_intersection: s.frames[i].dist_to_intersection,
            });
        }
    }
    Ok(out)
}

/// Median of each occupied cell's square neighborhood (occupied cells only).
/// A neighborhood of 1 returns the input.
pub fn median_filter(cells: &BTreeMap<(i64, i64), f64>, neighborhood: usize) -> Result<BTreeMap<(i64, i64), f64>> {
    if neighborhood == 0 || neighborhood.is_multiple_of(2) {
        return Err(HarnessError::Config("median neighborhood must be odd and positive".into()));
    }
    let half = (neighborhood / 2) as i64;
    let mut out = BTreeMap::new();
    let mut window = Vec::with_capacity(neighborhood * neighborhood);
    for &(cx, cy) in cells.keys() {
        window.clear();
        for dx in -half..=half {
            for dy in -half..=half {
                if let Some(v) = cells.get(&(cx + dx, cy + dy)) {
                    window.push(*v);
                }
            }
        }
        window.sort_by(f64::total_cmp);
        let n = window.len();
        let median = if n % 2 == 1 {
            window[n / 2]
        } else {
            0.5 * (window[n / 2 - 1] + window[n / 2])
        };
        out.insert((cx, cy), median);
    }
    Ok(out)
}

/// Bins per-frame risks into world cells, averages within each cell and
/// median-filters across cells. Output is ordered by cell.
pub fn aggregate_risk(points: &[RiskPoint], cfg: &RiskConfig) -> Result<Vec<RiskCell>> {
    if !(cfg.cell_size > 0.0) {
        return Err(HarnessError::Config("cell size must be positive".into()));
    }
    struct Acc {
        sum: f64,
        n: usize,
        min_dist: f64,
    }
    let mut acc: BTreeMap<(i64, i64), Acc> = BTreeMap::new();
    for p in points {
        let key = (
            (p.position[0] / cfg.cell_size).floor() as i64,
            (p.position[1] / cfg.cell_size).floor() as i64,
        );
        let a = acc.entry(key).or_insert(Acc {
            sum: 0.0,
            n: 0,
            min_dist: f64::INFINITY,
        });
        a.sum += p.risk;
        a.n += 1;
        a.min_dist = a.min_dist.min(p.dist_to_intersection);
    }
    let means: BTreeMap<(i64, i64), f64> = acc.iter().map(|(k, a)| (*k, a.sum / a.n as f64)).collect();
    let filtered = median_filter(&means, cfg.neighborhood)?;
    Ok(acc
        .iter()
        .map(|(k, a)| RiskCell {
            cell: *k,
            position: [
                (k.0 as f64 + 0.5) * cfg.cell_size,
                (k.1 as f64 + 0.5) * cfg.cell_size,
            ],
            risk: filtered[k],
            cell_mean: means[k],
            samples: a.n,
            min_dist_to_intersection: a.min_dist,
        })
        .collect())
}

/// Full risk map: per-frame divergences, binned and median-filtered.
pub fn risk_map(
    predictor: &dyn Predictor,
    sessions: &[SessionRecord],
    cfg: &RiskConfig,
) -> Result<Vec<RiskCell>> {
    let points = timestamp_risks(predictor, sessions, cfg.downsample_factor)?;
    aggregate_risk(&points, cfg)
}

/// Writes `position_x,position_y,risk` rows after a `#` comment line
/// carrying the configuration hash.
pub fn write_risk_table<W: Write>(cells: &[RiskCell], config_hash: &str, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# config_hash={config_hash}")?;
    writeln!(w, "position_x,position_y,risk")?;
    for c in cells {
        writeln!(w, "{},{},{}", c.position[0], c.position[1], c.risk)?;
    }
    Ok(())
}

/// Parses a table written by [`write_risk_table`] into `(x, y, risk)`.
pub fn read_risk_table(text: &str) -> Result<Vec<[f64; 3]>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("position_x") && !l.trim().is_empty())
        .map(|l| {
            let v: Vec<f64> = l
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| HarnessError::Corrupt(format!("bad risk row `{l}`")))?;
            match v.as_slice() {
                [x, y, r] => Ok([*x, *y, *r]),
                _ => Err(HarnessError::Corrupt(format!("bad risk row `{l}`"))),
            }
        })
        .collect()
}
