//! The `entropy-lab` command-line interface.
//!
//! Exit codes: 0 success, 2 config error, 3 precondition error.

use clap::{Parser, Subcommand};

use crate::error::Error;

use super::config::RunConfig;
use super::pipelines::{
    cmd_ablate, cmd_adapt, cmd_emgmm, cmd_estimate, cmd_fit_curve, cmd_gen_data, cmd_pretrain,
    cmd_report, Lab,
};

#[derive(Parser)]
#[command(
    name = "entropy-lab",
    about = "Entropy-minimization adaptation lab: synthetic shifts, Tent/RDumb, and unlabeled accuracy estimation"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration file (flat [section] key = value document).
    #[arg(long, global = true)]
    config: Option<String>,

    /// Override the global seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the source splits and the shift suite as CSV files.
    GenData,
    /// Train the classifier on the clean source data and save it.
    Pretrain,
    /// Run one adaptation experiment and record trace, flips, and plots.
    Adapt,
    /// Fit the flips-to-accuracy calibration curve on the holdout pool.
    FitCurve,
    /// Run the accuracy estimators over the shift suite.
    Estimate,
    /// Stopping-iteration, tracked-size, and fitting-subset ablations.
    Ablate,
    /// The EM-on-GMM toy with trainable sample locations.
    Emgmm,
    /// Suite-level phase analysis (per-dataset deltas and correlations).
    Report,
}

/// Exit code taxonomy. Config problems are caller mistakes (2); missing
/// artifacts and unsatisfiable inputs are precondition failures (3).
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        _ => 3,
    }
}

/// Parse arguments and run. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version by "erroring" with a display request
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cfg = match &cli.config {
        Some(path) => match RunConfig::load(std::path::Path::new(path)) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        },
        None => RunConfig::default(),
    };
    let lab = match Lab::new(cfg, cli.out.clone(), cli.seed) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let result = match cli.command {
        Command::GenData => cmd_gen_data(&lab),
        Command::Pretrain => cmd_pretrain(&lab),
        Command::Adapt => cmd_adapt(&lab),
        Command::FitCurve => cmd_fit_curve(&lab),
        Command::Estimate => cmd_estimate(&lab),
        Command::Ablate => cmd_ablate(&lab),
        Command::Emgmm => cmd_emgmm(&lab),
        Command::Report => cmd_report(&lab),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
