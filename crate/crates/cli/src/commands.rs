use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use drivattn_core::synth::{generate_session, SynthScenarioConfig};
use drivattn_core::{ConditionType, DrivingMode, SessionRecord};
use drivattn_harness::analysis::{read_risk_table, write_risk_table};
use drivattn_harness::experiments::{attention_set, evaluate_calibration, train_calibration_net};
use drivattn_harness::session_io::SESSION_EXTENSION;
use drivattn_harness::{
    build_sequences, config_hash, evaluate as run_evaluation, load_session_dir, make_splits, risk_map as run_risk_map,
    save_session, train as run_training, PredictorRegistry, Report, RiskConfig, SequencePlan, SequenceRef,
    SplitSpec, Splits, TrainConfig, TrainHistory,
};
use drivattn_models::{
    CalibrationConfig, CalibrationNet, Checkpoint, HeadKind, ModelConfig, ModelKind,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::{
    CalibrateArgs, Condition, EvaluateArgs, Mode, ModelChoice, RenderRiskArgs, RiskMapArgs, SynthArgs,
    TrainArgs, TrainCalibrationArgs, TrainOptions,
};
use crate::render::{heat_scatter, write_png};
use crate::usage;

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_FORMAT: &str = "drivattn-manifest/1";
const HISTORY_FORMAT: &str = "drivattn-history/1";
/// Checkpoint metadata key recording which webcam maps a calibration
/// network was trained on.
pub const CALIBRATION_INPUT_KEY: &str = "calibration_input";

impl From<Condition> for ConditionType {
    fn from(c: Condition) -> Self {
        match c {
            Condition::Intention => ConditionType::Intention,
            Condition::Distraction => ConditionType::Distraction,
        }
    }
}

impl From<Mode> for DrivingMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Manual => DrivingMode::Manual,
            Mode::Autopilot => DrivingMode::Autopilot,
        }
    }
}

impl From<ModelChoice> for HeadKind {
    fn from(m: ModelChoice) -> Self {
        match m {
            ModelChoice::Unconditioned => HeadKind::Unconditioned,
            ModelChoice::MultiBranch => HeadKind::MultiBranch,
            ModelChoice::CondConv => HeadKind::CondConv,
        }
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value)? + "\n")
}

/// Sessions of `dir` and their common map shape.
fn load_data(dir: &Path) -> Result<(Vec<SessionRecord>, (usize, usize))> {
    let sessions = load_session_dir(dir)?;
    let shape = sessions[0]
        .map_shape()
        .ok_or_else(|| anyhow!("{}: first session has no frames", dir.display()))?;
    if let Some(s) = sessions.iter().find(|s| s.map_shape().is_some_and(|m| m != shape)) {
        bail!("{}: session {} has maps of a different size", dir.display(), s.session_id);
    }
    Ok((sessions, shape))
}

fn check_shape(config: &ModelConfig, data: (usize, usize)) -> Result<()> {
    if config.map_shape() != data {
        bail!(
            "checkpoint/config mismatch: model predicts {:?} maps, data has {:?}",
            config.map_shape(),
            data
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    session_id: String,
    frames: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a SynthScenarioConfig,
    files: Vec<ManifestEntry>,
}

pub fn synth_generate(a: SynthArgs) -> Result<String> {
    if a.frames == 0 {
        return usage("--frames must be at least 1");
    }
    if a.sessions == 0 {
        return usage("--sessions must be at least 1");
    }
    let condition = ConditionType::from(a.condition);
    let mode = a.mode.map_or_else(|| drivattn_harness::sequences::default_mode(condition), DrivingMode::from);
    let mut cfg = SynthScenarioConfig {
        seed: a.seed,
        n_sessions: a.sessions,
        frames_per_session: a.frames,
        ..SynthScenarioConfig::for_mode(mode, condition)
    };
    if a.reduced {
        cfg = cfg.reduced();
    }
    cfg.validate().map_err(|e| crate::UsageError(e.to_string()))?;
    let hash = config_hash(&cfg)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut files = Vec::with_capacity(a.sessions);
    for i in 0..a.sessions {
        let session = generate_session(&cfg, i)?;
        let name = format!("session_{i:04}.{SESSION_EXTENSION}");
        let path = a.out.join(&name);
        save_session(&session, &path)?;
        let bytes = fs::read(&path).with_context(|| format!("reading back {}", path.display()))?;
        files.push(ManifestEntry {
            file: name,
            session_id: session.session_id.clone(),
            frames: session.len(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        seed: a.seed,
        config_hash: hash.clone(),
        config: &cfg,
        files,
    };
    write_json(&a.out.join(MANIFEST_FILE), &manifest)?;
    Ok(format!(
        "synth-generate: {} sessions x {} frames ({condition}, {mode}) -> {} config_hash={hash}",
        a.sessions,
        a.frames,
        a.out.display()
    ))
}

impl TrainOptions {
    fn config(&self) -> Result<TrainConfig> {
        if self.epochs == 0 || self.batch_size == 0 {
            return usage("--epochs and --batch-size must be at least 1");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return usage("--lr must be a non-negative number");
        }
        if self.val_per_label == 0 || self.max_len < 2 {
            return usage("--val-per-label must be at least 1 and --max-len at least 2");
        }
        Ok(TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            early_stop_patience: self.patience,
            samples_per_epoch: self.samples_per_epoch,
            seed: self.seed,
            ..TrainConfig::default()
        })
    }

    fn plan(&self) -> SequencePlan {
        SequencePlan {
            max_len: self.max_len,
            ..SequencePlan::default()
        }
    }

    fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            sequences_per_label: self.val_per_label,
            ..SplitSpec::default()
        }
    }
}

/// Labels splits and balanced sampling by scenario and state together.
fn split_labels(seqs: &[SequenceRef]) -> Vec<String> {
    seqs.iter().map(|s| format!("{}/{}", s.scenario, s.label)).collect()
}

fn split(labels: &[String], opts: &TrainOptions) -> Result<Splits> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    Ok(make_splits(labels, &opts.split_spec(), &mut rng)?)
}

#[derive(Serialize)]
struct HistoryFile<'a> {
    format: &'a str,
    seed: u64,
    config_hash: &'a str,
    /// Sequence indices per split over the data directory.
    splits: &'a Splits,
    history: &'a TrainHistory,
}

fn history_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("history.json")
}

fn finish_training(
    out: &Path,
    ckpt: Checkpoint,
    opts: &TrainOptions,
    hash: &str,
    splits: &Splits,
    history: &TrainHistory,
) -> Result<PathBuf> {
    let ckpt = ckpt
        .with_metadata("config_hash", hash)
        .with_metadata("seed", opts.seed.to_string());
    let bytes = serde_json::to_vec(&ckpt)?;
    write_file(out, bytes)?;
    let hist = history_path(out);
    write_json(
        &hist,
        &HistoryFile {
            format: HISTORY_FORMAT,
            seed: opts.seed,
            config_hash: hash,
            splits,
            history,
        },
    )?;
    Ok(hist)
}

pub fn train(a: TrainArgs) -> Result<String> {
    let kind = ModelKind::new(a.model.into(), a.condition.map(ConditionType::from))
        .map_err(|e| crate::UsageError(e.to_string()))?;
    let train_cfg = a.opts.config()?;
    let (sessions, shape) = load_data(&a.data)?;
    if let Some(c) = kind.condition_type {
        if let Some(f) = sessions.iter().flat_map(|s| &s.frames).find(|f| f.state.condition_type() != c) {
            bail!("data records {} states but the model is conditioned on {c}", f.state.condition_type());
        }
    }
    let mut model_cfg = ModelConfig::new(kind);
    model_cfg.encoder = model_cfg.encoder.clone().for_map(shape.0, shape.1);

    let plan = a.opts.plan();
    let seqs = build_sequences(&sessions, &plan);
    let labels = split_labels(&seqs);
    let splits = split(&labels, &a.opts)?;
    let mut train_set = attention_set(&sessions, &seqs, &splits.train);
    train_set.labels = splits.train.iter().map(|&i| labels[i].clone()).collect();
    let val_set = attention_set(&sessions, &seqs, &splits.val);

    let hash = config_hash(&(&model_cfg, &train_cfg, &plan, &a.opts.split_spec()))?;
    let mut model = drivattn_models::AttentionModel::new(model_cfg, a.opts.seed)?;
    let history = run_training(&mut model, &train_set, &val_set, &train_cfg)?;
    let hist = finish_training(&a.out, Checkpoint::from_model(&model), &a.opts, &hash, &splits, &history)?;
    Ok(format!(
        "train: {} best val KL {:.6} at epoch {} of {}; checkpoint -> {}, history -> {} config_hash={hash}",
        model.head_name(),
        history.best_val_kl,
        history.best_epoch,
        history.epochs.len(),
        a.out.display(),
        hist.display()
    ))
}

fn input_name(coarse: bool) -> &'static str {
    if coarse {
        "coarse"
    } else {
        "raw"
    }
}

pub fn train_calibration(a: TrainCalibrationArgs) -> Result<String> {
    let train_cfg = a.opts.config()?;
    let (sessions, shape) = load_data(&a.data)?;
    let calib = CalibrationConfig::with_stages(a.coarse.is_on(), true);
    let model_cfg = CalibrationNet::model_config(
        drivattn_models::EncoderConfig::default().for_map(shape.0, shape.1),
    );
    let plan = a.opts.plan();
    let seqs = build_sequences(&sessions, &plan);
    let splits = split(&split_labels(&seqs), &a.opts)?;

    let hash = config_hash(&(&model_cfg, &calib, &train_cfg, &plan, &a.opts.split_spec()))?;
    let (net, history) = train_calibration_net(
        &sessions,
        &seqs,
        &splits.train,
        &splits.val,
        model_cfg,
        &calib,
        &train_cfg,
    )?;
    let ckpt = Checkpoint::from_model(net.model()).with_metadata(CALIBRATION_INPUT_KEY, input_name(calib.coarse));
    let hist = finish_training(&a.out, ckpt, &a.opts, &hash, &splits, &history)?;
    Ok(format!(
        "train-calibration: {} input, best val KL {:.6} at epoch {} of {}; checkpoint -> {}, history -> {} config_hash={hash}",
        input_name(calib.coarse),
        history.best_val_kl,
        history.best_epoch,
        history.epochs.len(),
        a.out.display(),
        hist.display()
    ))
}

/// Hash of a checkpoint's contents, or the stub name itself.
fn checkpoint_identity(ckpt: &Checkpoint) -> Result<String> {
    Ok(config_hash(&(&ckpt.config, &ckpt.params))?)
}

fn metrics_line(m: &drivattn_harness::GroupMetrics) -> String {
    let cc = m.cc.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    format!("CC {cc} KL {:.4} H {:.4} over {} frames", m.kl, m.entropy, m.frames)
}

pub fn evaluate(a: EvaluateArgs) -> Result<String> {
    let (sessions, shape) = load_data(&a.data)?;
    let registry = PredictorRegistry::default();
    let mut seed = 0;
    let identity = match a.ckpt.strip_prefix("stub:") {
        Some(name) => {
            if !registry.names().contains(&name) || name == "model" {
                return usage(format!("unknown stub `{name}`"));
            }
            format!("stub:{name}")
        }
        None => {
            let ckpt = Checkpoint::load(Path::new(&a.ckpt))?;
            if ckpt.config.extra_input_channels != 0 {
                bail!("checkpoint/config mismatch: {} is a calibration network", a.ckpt);
            }
            check_shape(&ckpt.config, shape)?;
            if let Some(c) = ckpt.config.kind.condition_type {
                if let Some(f) = sessions.iter().flat_map(|s| &s.frames).find(|f| f.state.condition_type() != c) {
                    bail!(
                        "checkpoint/config mismatch: model is conditioned on {c}, data records {} states",
                        f.state.condition_type()
                    );
                }
            }
            seed = ckpt.metadata.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
            checkpoint_identity(&ckpt)?
        }
    };
    let predictor = registry.resolve(&a.ckpt)?;
    let plan = SequencePlan::default();
    let seqs = build_sequences(&sessions, &plan);
    let eval = run_evaluation(predictor.as_ref(), &sessions, &seqs)?;
    let hash = config_hash(&(&identity, &plan))?;
    let mut report = Report::from_evaluation(&eval, seed, &hash);
    report.metadata.insert("predictor".into(), predictor.name().to_string());
    write_file(&a.report, report.to_json()? + "\n")?;
    Ok(format!(
        "evaluate: {} {}; report -> {} config_hash={hash}",
        predictor.name(),
        metrics_line(&eval.overall),
        a.report.display()
    ))
}

fn cell_name(coarse: bool, fine: bool) -> &'static str {
    match (coarse, fine) {
        (false, false) => "raw",
        (true, false) => "coarse",
        (false, true) => "fine",
        (true, true) => "coarse+fine",
    }
}

pub fn calibrate(a: CalibrateArgs) -> Result<String> {
    let (coarse, fine) = (a.coarse.is_on(), a.fine.is_on());
    match (fine, &a.ckpt) {
        (true, None) => return usage("--fine on needs --ckpt with a calibration network"),
        (false, Some(_)) => return usage("--ckpt is only used with --fine on"),
        _ => {}
    }
    let (sessions, shape) = load_data(&a.data)?;
    let cfg = CalibrationConfig::with_stages(coarse, fine);
    let mut seed = 0;
    let (net, identity) = match &a.ckpt {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            check_shape(&ckpt.config, shape)?;
            let trained_on = ckpt.metadata.get(CALIBRATION_INPUT_KEY).map(String::as_str);
            if trained_on != Some(input_name(coarse)) {
                bail!(
                    "checkpoint/config mismatch: {} was trained on {} webcam maps, --coarse {} feeds {}",
                    path.display(),
                    trained_on.unwrap_or("unknown"),
                    if coarse { "on" } else { "off" },
                    input_name(coarse)
                );
            }
            seed = ckpt.metadata.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
            let identity = checkpoint_identity(&ckpt)?;
            let net = CalibrationNet::from_model(ckpt.into_model()?)
                .map_err(|e| anyhow!("checkpoint/config mismatch: {e}"))?;
            (Some(net), Some(identity))
        }
        None => (None, None),
    };
    let metrics = evaluate_calibration(&sessions, &cfg, net.as_ref())?;
    let cell = cell_name(coarse, fine);
    let hash = config_hash(&(&cfg, &identity))?;
    let mut report = Report::new(seed, &hash);
    report.push_group("calibration", cell, &metrics);
    report.metadata = BTreeMap::from([
        ("coarse".to_string(), coarse.to_string()),
        ("fine".to_string(), fine.to_string()),
    ]);
    write_file(&a.report, report.to_json()? + "\n")?;
    Ok(format!(
        "calibrate: {cell} {}; report -> {} config_hash={hash}",
        metrics_line(&metrics),
        a.report.display()
    ))
}

pub fn risk_map(a: RiskMapArgs) -> Result<String> {
    if a.downsample == 0 || a.neighborhood.is_multiple_of(2) || !(a.cell_size > 0.0) {
        return usage("--downsample must be positive, --neighborhood odd and --cell-size positive");
    }
    let (sessions, shape) = load_data(&a.data)?;
    let ckpt = Checkpoint::load(&a.ckpt)?;
    check_shape(&ckpt.config, shape)?;
    if ckpt.config.kind.condition_type != Some(ConditionType::Distraction) {
        bail!("checkpoint/config mismatch: risk maps need a distraction-conditioned model");
    }
    let identity = checkpoint_identity(&ckpt)?;
    let predictor = drivattn_harness::ModelPredictor::new(ckpt.into_model()?)?;
    let cfg = RiskConfig {
        downsample_factor: a.downsample,
        neighborhood: a.neighborhood,
        cell_size: a.cell_size,
    };
    let cells = run_risk_map(&predictor, &sessions, &cfg)?;
    let hash = config_hash(&(&identity, &cfg))?;
    let mut table = Vec::new();
    write_risk_table(&cells, &hash, &mut table)?;
    write_file(&a.out, table)?;
    let peak = cells.iter().map(|c| c.risk).fold(0.0, f64::max);
    Ok(format!(
        "risk-map: {} cells, max risk {peak:.4}; table -> {} config_hash={hash}",
        cells.len(),
        a.out.display()
    ))
}

pub fn render_risk(a: RenderRiskArgs) -> Result<String> {
    if a.scale == 0 {
        return usage("--scale must be at least 1");
    }
    let text = fs::read_to_string(&a.table).with_context(|| format!("reading {}", a.table.display()))?;
    let hash = text
        .lines()
        .find_map(|l| l.strip_prefix("# config_hash="))
        .map(str::trim)
        .ok_or_else(|| anyhow!("{}: missing config_hash header", a.table.display()))?
        .to_string();
    let points = read_risk_table(&text).with_context(|| format!("parsing {}", a.table.display()))?;
    let raster = heat_scatter(&points, a.scale).with_context(|| format!("rendering {}", a.table.display()))?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_png(&a.out, &raster, &hash)?;
    Ok(format!(
        "render-risk: {} points, {}x{} image -> {} config_hash={hash}",
        points.len(),
        raster.width,
        raster.height,
        a.out.display()
    ))
}
