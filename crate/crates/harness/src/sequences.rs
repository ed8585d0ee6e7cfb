//! Sequence extraction, dataset splits and label-balanced sampling.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use drivattn_core::{ConditionType, DrivingMode, SessionRecord};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const DEFAULT_INTERSECTION_RADIUS: f64 = 30.0;
pub const DEFAULT_SEQUENCES_PER_LABEL: usize = 20;

/// Approach ranges: from the first frame within `radius` of an intersection
/// to the closest frame of that approach. Frames leaving an intersection are
/// never included; a range needs at least one decreasing step.
pub fn intersection_ranges(dists: &[f64], radius: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..dists.len() {
        let inside = dists[i] <= radius;
        match start {
            None => {
                if !inside {
                    continue;
                }
                let entering = i == 0 || dists[i - 1] > radius;
                // Re-approach without leaving the radius starts at the turning point.
                let turning = i > 0 && dists[i - 1] <= radius && dists[i] < dists[i - 1];
                if entering {
                    start = Some(i);
                } else if turning {
                    start = Some(i - 1);
                }
            }
            Some(s) => {
                if !inside || dists[i] > dists[i - 1] {
                    if i - 1 > s {
                        out.push(s..i);
                    }
                    start = None;
                    // A frame can close one approach and open none; the next
                    // opening is detected by the `turning` rule.
                }
            }
        }
    }
    if let Some(s) = start {
        if dists.len() - 1 > s {
            out.push(s..dists.len());
        }
    }
    out
}

/// Maximal ranges with distance strictly greater than `radius`.
pub fn lane_following_ranges(dists: &[f64], radius: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, d) in dists.iter().enumerate() {
        match (start, *d > radius) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                out.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..dists.len());
    }
    out
}

pub fn extract_intersection_sequences(session: &SessionRecord, radius: f64) -> Vec<Range<usize>> {
    intersection_ranges(&session.distances(), radius)
}

pub fn extract_lane_following(session: &SessionRecord, radius: f64) -> Vec<Range<usize>> {
    lane_following_ranges(&session.distances(), radius)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Intersection,
    LaneFollowing,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Intersection => "intersection",
            Scenario::LaneFollowing => "lane_following",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A frame range of one session with its scenario and sampling label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceRef {
    pub session: usize,
    pub start: usize,
    pub end: usize,
    pub scenario: Scenario,
    pub label: String,
}

impl SequenceRef {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// `(session, frame)` identifiers of every frame in the sequence.
    pub fn frame_ids(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.range().map(move |i| (self.session, i))
    }
}

/// Most frequent state label in `range`; ties go to the earliest label.
fn majority_label(session: &SessionRecord, range: Range<usize>) -> String {
    let mut counts: Vec<(&'static str, usize)> = Vec::new();
    for f in &session.frames[range] {
        let l = f.state.label();
        match counts.iter_mut().find(|(k, _)| *k == l) {
            Some((_, c)) => *c += 1,
            None => counts.push((l, 1)),
        }
    }
    let best = counts.iter().map(|(_, c)| *c).max().unwrap_or(0);
    counts
        .into_iter()
        .find(|(_, c)| *c == best)
        .map(|(l, _)| l.to_string())
        .unwrap_or_default()
}

/// Splits `range` into consecutive chunks of at most `len` frames, dropping
/// a trailing chunk shorter than `min_len`.
pub fn chunk_range(range: Range<usize>, len: usize, min_len: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut s = range.start;
    while s < range.end {
        let e = (s + len).min(range.end);
        if e - s >= min_len.max(1) {
            out.push(s..e);
        }
        s = e;
    }
    out
}

/// How sessions are cut into labeled sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencePlan {
    pub intersection_radius: f64,
    /// Longest sequence; longer ranges are chunked.
    pub max_len: usize,
    pub min_len: usize,
    pub include_intersections: bool,
    pub include_lane_following: bool,
}

impl Default for SequencePlan {
    fn default() -> Self {
        Self {
            intersection_radius: DEFAULT_INTERSECTION_RADIUS,
            max_len: 16,
            min_len: 2,
            include_intersections: true,
            include_lane_following: true,
        }
    }
}

/// Labeled sequences over all sessions, in session then frame order.
///
/// Intersection approaches are labeled by the state at their closest frame;
/// other chunks by their majority state.
pub fn build_sequences(sessions: &[SessionRecord], plan: &SequencePlan) -> Vec<SequenceRef> {
    let mut out = Vec::new();
    for (si, s) in sessions.iter().enumerate() {
        let dists = s.distances();
        let mut seqs = Vec::new();
        if plan.include_intersections {
            for r in intersection_ranges(&dists, plan.intersection_radius) {
                let label = s.frames[r.end - 1].state.label().to_string();
                for c in chunk_range(r, plan.max_len, plan.min_len) {
                    seqs.push((c, Scenario::Intersection, Some(label.clone())));
                }
            }
        }
        if plan.include_lane_following {
            for r in lane_following_ranges(&dists, plan.intersection_radius) {
                for c in chunk_range(r, plan.max_len, plan.min_len) {
                    seqs.push((c, Scenario::LaneFollowing, None));
                }
            }
        }
        seqs.sort_by_key(|(r, _, _)| r.start);
        for (r, scenario, label) in seqs {
            let label = label.unwrap_or_else(|| majority_label(s, r.clone()));
            out.push(SequenceRef {
                session: si,
                start: r.start,
                end: r.end,
                scenario,
                label,
            });
        }
    }
    out
}

/// Held-out sizes for [`make_splits`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub intersection_radius: f64,
    /// Sequences per label in each of validation and test.
    pub sequences_per_label: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            intersection_radius: DEFAULT_INTERSECTION_RADIUS,
            sequences_per_label: DEFAULT_SEQUENCES_PER_LABEL,
        }
    }
}

/// Driving mode whose sessions train each condition by default: manual
/// drives for intentions, autopilot drives for distraction.
pub fn default_mode(condition: ConditionType) -> DrivingMode {
    match condition {
        ConditionType::Intention => DrivingMode::Manual,
        ConditionType::Distraction => DrivingMode::Autopilot,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per label: a seeded shuffle, then `n` sequences to validation, `n` to
/// test and the rest to training. Indices refer to `labels`.
pub fn make_splits<L: Ord + Clone + fmt::Display>(
    labels: &[L],
    spec: &SplitSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Splits> {
    let n = spec.sequences_per_label;
    let mut groups: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.clone()).or_default().push(i);
    }
    let mut splits = Splits::default();
    for (label, mut idx) in groups {
        if idx.len() < 2 * n {
            return Err(HarnessError::InsufficientSequences {
                label: label.to_string(),
                available: idx.len(),
                required: 2 * n,
            });
        }
        idx.shuffle(rng);
        splits.val.extend_from_slice(&idx[..n]);
        splits.test.extend_from_slice(&idx[n..2 * n]);
        splits.train.extend_from_slice(&idx[2 * n..]);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    Ok(splits)
}

/// Endless index stream that picks a label uniformly, then a sequence
/// uniformly within it, so rare labels are seen as often as common ones.
#[derive(Clone, Debug)]
pub struct ReweightedSampler {
    groups: Vec<Vec<usize>>,
    rng: ChaCha8Rng,
}

impl ReweightedSampler {
    pub fn new<L: Ord + Clone>(labels: &[L], seed: u64) -> Result<Self> {
        let mut by_label: BTreeMap<L, Vec<usize>> = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            by_label.entry(l.clone()).or_default().push(i);
        }
        if by_label.is_empty() {
            return Err(HarnessError::EmptyGroup("the sampler".into()));
        }
        Ok(Self {
            groups: by_label.into_values().collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn num_labels(&self) -> usize {
        self.groups.len()
    }
}

impl Iterator for ReweightedSampler {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let g = &self.groups[self.rng.random_range(0..self.groups.len())];
        Some(g[self.rng.random_range(0..g.len())])
    }
}

pub fn reweighted_sampler<L: Ord + Clone>(labels: &[L], seed: u64) -> Result<ReweightedSampler> {
    ReweightedSampler::new(labels, seed)
}
