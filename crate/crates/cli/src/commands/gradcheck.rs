use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use nightsign::gradcheck::{run_target, CheckOutcome, DEFAULT_EPS, TARGETS};
use serde::{Deserialize, Serialize};

use crate::commands::layers;
use crate::config::u;
use crate::report::{table, write, write_json};
use crate::Common;

#[derive(Args, Debug)]
pub struct GradCheckArgs {
    #[command(flatten)]
    common: Common,
    /// Number of consecutive seeds, starting at `--seed`.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Largest acceptable relative error.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Restrict to these targets (repeatable). `--list` shows them.
    #[arg(long = "target")]
    targets: Vec<String>,
    #[arg(long)]
    list: bool,
    /// Receives `gradcheck.csv` and `gradcheck.json`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Deserialize, Serialize)]
struct GradCheckConfig {
    #[serde(default = "default_seeds")]
    seeds: u64,
    #[serde(default = "default_eps")]
    eps: f64,
    #[serde(default = "default_tol")]
    tolerance: f64,
    #[serde(default)]
    targets: Vec<String>,
    #[serde(default)]
    output: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
}

fn default_seeds() -> u64 {
    20
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

fn default_tol() -> f64 {
    1e-4
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a GradCheckConfig,
    passed: bool,
    outcomes: &'a [CheckOutcome],
}

pub fn run(args: GradCheckArgs) -> Result<u8> {
    if args.list {
        for t in TARGETS {
            println!("{t}");
        }
        return Ok(0);
    }
    let mut l = layers(&args.common, "grad_check")?;
    l.set("seeds", u(args.seeds))
        .set("eps", args.eps)
        .set("tolerance", args.tolerance)
        .set_path("output", args.output.as_deref());
    if !args.targets.is_empty() {
        l.set("targets", Some(args.targets.clone()));
    }
    let cfg: GradCheckConfig = l.finish()?;
    let targets: Vec<String> =
        if cfg.targets.is_empty() { TARGETS.iter().map(|s| s.to_string()).collect() } else { cfg.targets.clone() };

    let mut outcomes = Vec::new();
    let mut rows = Vec::new();
    for t in &targets {
        let mut worst: Option<CheckOutcome> = None;
        for s in cfg.seed..cfg.seed + cfg.seeds {
            let o = run_target(t, s, cfg.eps)?;
            if worst.as_ref().is_none_or(|w| o.max_rel_error > w.max_rel_error) {
                worst = Some(o.clone());
            }
            outcomes.push(o);
        }
        if let Some(w) = worst {
            let ok = w.max_rel_error <= cfg.tolerance;
            rows.push(vec![
                t.clone(),
                format!("{:.3e}", w.max_rel_error),
                w.seed.to_string(),
                if ok { "ok" } else { "FAIL" }.to_string(),
            ]);
        }
    }
    let passed = outcomes.iter().all(|o| o.max_rel_error <= cfg.tolerance);
    if let Some(dir) = &cfg.output {
        let mut csv = String::from("target,seed,max_rel_error,checked,redraws\n");
        for o in &outcomes {
            let _ = writeln!(csv, "{},{},{:e},{},{}", o.target, o.seed, o.max_rel_error, o.checked, o.redraws);
        }
        write(&dir.join("gradcheck.csv"), csv.as_bytes())?;
        write_json(&dir.join("gradcheck.json"), &Summary { config: &cfg, passed, outcomes: &outcomes })?;
    }
    print!("{}", table(&["target", "worst_rel_error", "at_seed", "status"], &rows));
    println!(
        "{} checks over {} seeds, tolerance {:e}: {}",
        outcomes.len(),
        cfg.seeds,
        cfg.tolerance,
        if passed { "all passed" } else { "FAILED" }
    );
    Ok(if passed { 0 } else { 2 })
}
