use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Environment variable naming the default data directory.
pub const DATA_ENV: &str = "DRIVATTN_DATA";

#[derive(Debug, Parser)]
#[command(name = "drivattn", version, about = "State-conditioned driver attention toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write seeded synthetic sessions and a manifest.
    SynthGenerate(SynthArgs),
    /// Train an attention model.
    Train(TrainArgs),
    /// Train the fine gaze calibration network.
    TrainCalibration(TrainCalibrationArgs),
    /// Score a model or stub against ground truth.
    Evaluate(EvaluateArgs),
    /// Score one cell of the coarse/fine calibration ablation.
    Calibrate(CalibrateArgs),
    /// Attentive-versus-distracted divergence binned over ego position.
    RiskMap(RiskMapArgs),
    /// Render a risk table as a heat-scatter PNG.
    RenderRisk(RenderRiskArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Condition {
    Intention,
    Distraction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Manual,
    Autopilot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Unconditioned,
    MultiBranch,
    CondConv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub sessions: usize,
    #[arg(long, default_value_t = 240)]
    pub frames: usize,
    #[arg(long, value_enum, default_value = "intention")]
    pub condition: Condition,
    /// Defaults to manual drives for intention, autopilot for distraction.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// 8x16 maps and 64x128 frames instead of 32x64 and 256x512.
    #[arg(long)]
    pub reduced: bool,
    #[arg(long, env = DATA_ENV)]
    pub out: PathBuf,
}

/// Optimizer and split settings shared by the training commands.
#[derive(Debug, Args)]
pub struct TrainOptions {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// Sequences drawn per epoch; each training sequence once if unset.
    #[arg(long)]
    pub samples_per_epoch: Option<usize>,
    /// Validation sequences held out per label.
    #[arg(long, default_value_t = 2)]
    pub val_per_label: usize,
    #[arg(long, default_value_t = 16)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelChoice,
    #[arg(long, value_enum)]
    pub condition: Option<Condition>,
    #[arg(long, env = DATA_ENV)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: TrainOptions,
}

#[derive(Debug, Args)]
pub struct TrainCalibrationArgs {
    #[arg(long, env = DATA_ENV)]
    pub data: PathBuf,
    /// Train on coarse-centered (on) or raw (off) webcam maps.
    #[arg(long, value_enum, default_value = "on")]
    pub coarse: Switch,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: TrainOptions,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint path, or `stub:oracle` / `stub:uniform`.
    #[arg(long)]
    pub ckpt: String,
    #[arg(long, env = DATA_ENV)]
    pub data: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, env = DATA_ENV)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub coarse: Switch,
    #[arg(long, value_enum)]
    pub fine: Switch,
    /// Calibration network checkpoint; required with `--fine on`.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct RiskMapArgs {
    /// Distraction-conditioned checkpoint.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, env = DATA_ENV)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pooling factor applied to maps before the transport distance.
    #[arg(long, default_value_t = 4)]
    pub downsample: usize,
    /// Median window side, in world cells.
    #[arg(long, default_value_t = 3)]
    pub neighborhood: usize,
    /// World cell side in meters.
    #[arg(long, default_value_t = 5.0)]
    pub cell_size: f64,
}

#[derive(Debug, Args)]
pub struct RenderRiskArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pixels per world cell.
    #[arg(long, default_value_t = 8)]
    pub scale: u32,
}
