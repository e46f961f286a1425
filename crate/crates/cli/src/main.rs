//! `nightsign` command-line tool.
//!
//! Exit codes: 0 when every stage succeeded, 2 when the run finished but
//! something was skipped or failed a check (missing detection files, bad
//! annotation rows, gradient errors over tolerance), 1 on errors.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "nightsign", version, about = "Low-light traffic-sign enhancement and detection evaluation")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options every subcommand accepts.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for everything random in the run.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert GTSRB/GTSDB annotations to YOLO label files.
    Convert(commands::convert::ConvertArgs),
    /// Train the enhancer on low/high image pairs.
    Train(commands::train::TrainArgs),
    /// Enhance images with a trained checkpoint.
    Enhance(commands::enhance::EnhanceArgs),
    /// Finite-difference gradient checks of every operator and block.
    GradCheck(commands::gradcheck::GradCheckArgs),
    /// Score YOLO-format detections against ground truth.
    EvalDetect(commands::eval::EvalArgs),
    /// Compare detection with and without enhancement.
    Pipeline(commands::pipeline::PipelineArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Convert(a) => commands::convert::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Enhance(a) => commands::enhance::run(a),
        Command::GradCheck(a) => commands::gradcheck::run(a),
        Command::EvalDetect(a) => commands::eval::run(a),
        Command::Pipeline(a) => commands::pipeline::run(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

/// The error chain joined by `: `, skipping causes the outer message
/// already spells out.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}
