//! Per-group metric evaluation and machine-readable reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use drivattn_core::metrics::{cc, entropy, kl, KL_EPSILON};
use drivattn_core::{AttentionMap, CoreError, DriverState, SessionRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::predictor::Predictor;
use crate::sequences::{Scenario, SequenceRef};

pub const REPORT_FORMAT: &str = "drivattn-report/1";

/// Running sums of per-frame CC, KL and entropy. CC is skipped for frames
/// where it is undefined (a constant map).
#[derive(Clone, Debug, Default)]
pub struct MetricAccumulator {
    cc_sum: f64,
    cc_frames: usize,
    kl_sum: f64,
    entropy_sum: f64,
    frames: usize,
}

impl MetricAccumulator {
    pub fn add(&mut self, pred: &AttentionMap, gt: &AttentionMap) -> Result<()> {
        match cc(pred, gt) {
            Ok(v) => {
                self.cc_sum += v;
                self.cc_frames += 1;
            }
            Err(CoreError::UndefinedMetric { .. }) => {}
            Err(e) => return Err(e.into()),
        }
        self.kl_sum += kl(pred, gt, KL_EPSILON)?;
        self.entropy_sum += entropy(pred);
        self.frames += 1;
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn finish(&self, what: &str) -> Result<GroupMetrics> {
        if self.frames == 0 {
            return Err(HarnessError::EmptyGroup(what.to_string()));
        }
        let n = self.frames as f64;
        Ok(GroupMetrics {
            cc: (self.cc_frames > 0).then(|| self.cc_sum / self.cc_frames as f64),
            kl: self.kl_sum / n,
            entropy: self.entropy_sum / n,
            frames: self.frames,
        })
    }
}

/// Frame-averaged metrics of one group. `cc` is `None` when it is undefined
/// on every frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub cc: Option<f64>,
    pub kl: f64,
    pub entropy: f64,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub groups: BTreeMap<(Scenario, String), GroupMetrics>,
    pub overall: GroupMetrics,
}

/// Predicts every sequence with its recorded states and scores each frame
/// in the group `(scenario, state label)`.
pub fn evaluate(
    predictor: &dyn Predictor,
    sessions: &[SessionRecord],
    sequences: &[SequenceRef],
) -> Result<Evaluation> {
    if sequences.is_empty() {
        return Err(HarnessError::EmptyGroup("evaluation".into()));
    }
    let mut groups: BTreeMap<(Scenario, String), MetricAccumulator> = BTreeMap::new();
    let mut overall = MetricAccumulator::default();
    for seq in sequences {
        let session = sessions
            .get(seq.session)
            .ok_or_else(|| HarnessError::Config(format!("sequence refers to missing session {}", seq.session)))?;
        let frames = &session.frames[seq.range()];
        let states: Vec<DriverState> = frames.iter().map(|f| f.state).collect();
        let preds = predictor.predict(frames, &states)?;
        for (f, p) in frames.iter().zip(&preds) {
            let key = (seq.scenario, f.state.label().to_string());
            groups.entry(key).or_default().add(p, &f.gt_map)?;
            overall.add(p, &f.gt_map)?;
        }
    }
    let groups = groups
        .into_iter()
        .map(|(k, acc)| {
            let what = format!("{}/{}", k.0, k.1);
            Ok((k, acc.finish(&what)?))
        })
        .collect::<Result<_>>()?;
    Ok(Evaluation {
        groups,
        overall: overall.finish("evaluation")?,
    })
}

/// One value of the report: a metric of one (scenario, condition) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub scenario: String,
    pub condition: String,
    pub metric: String,
    pub value: Option<f64>,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub records: Vec<ReportRecord>,
}

impl Report {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        Self {
            format: REPORT_FORMAT.to_string(),
            seed,
            config_hash: config_hash.into(),
            metadata: BTreeMap::new(),
            records: Vec::new(),
        }
    }

    pub fn push_group(&mut self, scenario: &str, condition: &str, m: &GroupMetrics) {
        for (metric, value) in [("cc", m.cc), ("entropy", Some(m.entropy)), ("kl", Some(m.kl))] {
            self.records.push(ReportRecord {
                scenario: scenario.to_string(),
                condition: condition.to_string(),
                metric: metric.to_string(),
                value,
                frames: m.frames,
            });
        }
    }

    pub fn from_evaluation(eval: &Evaluation, seed: u64, config_hash: &str) -> Self {
        let mut report = Self::new(seed, config_hash);
        for ((scenario, label), m) in &eval.groups {
            report.push_group(scenario.as_str(), label, m);
        }
        report.push_group("all", "all", &eval.overall);
        report
    }

    pub fn value(&self, scenario: &str, condition: &str, metric: &str) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.scenario == scenario && r.condition == condition && r.metric == metric)
            .and_then(|r| r.value)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fixed-width table with one row per group: CC (higher is better),
    /// then H and KL (lower is better).
    pub fn table(&self) -> String {
        let mut rows: BTreeMap<(String, String), [Option<f64>; 3]> = BTreeMap::new();
        let mut frames: BTreeMap<(String, String), usize> = BTreeMap::new();
        for r in &self.records {
            let key = (r.scenario.clone(), r.condition.clone());
            let slot = match r.metric.as_str() {
                "cc" => 0,
                "entropy" => 1,
                "kl" => 2,
                _ => continue,
            };
            rows.entry(key.clone()).or_default()[slot] = r.value;
            frames.insert(key, r.frames);
        }
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:<12} {:>8} {:>8} {:>8} {:>8}",
            "scenario", "condition", "CC(+)", "H(-)", "KL(-)", "frames"
        );
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        for (key, vals) in &rows {
            let _ = writeln!(
                out,
                "{:<16} {:<12} {:>8} {:>8} {:>8} {:>8}",
                key.0,
                key.1,
                fmt(vals[0]),
                fmt(vals[1]),
                fmt(vals[2]),
                frames[key]
            );
        }
        out
    }
}

/// First 16 hex digits of the SHA-256 of `value`'s JSON form.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&json);
    Ok(hex::encode(&digest[..8]))
}
