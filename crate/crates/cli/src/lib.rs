//! The `drivattn` command line: argument definitions, the usage/runtime
//! error split and one function per subcommand.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod render;

use std::fmt;

pub use args::{Cli, Command};

/// Exit status for bad flags or flag combinations.
pub const EXIT_USAGE: i32 = 1;
/// Exit status for failures while running a valid command.
pub const EXIT_RUNTIME: i32 = 2;

/// A command rejected before any work was done.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

/// Exit status for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

/// Runs one subcommand and returns its one-line summary.
pub fn run(cli: Cli) -> anyhow::Result<String> {
    match cli.command {
        Command::SynthGenerate(a) => commands::synth_generate(a),
        Command::Train(a) => commands::train(a),
        Command::TrainCalibration(a) => commands::train_calibration(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::RiskMap(a) => commands::risk_map(a),
        Command::RenderRisk(a) => commands::render_risk(a),
    }
}
