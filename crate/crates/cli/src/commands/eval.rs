use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use nightsign::dataset::LabelSpace;
use nightsign::eval::io::{load_detections_dir, load_ground_truth_dir};
use nightsign::eval::{evaluate, EvalReport, DEFAULT_CONF_THRESHOLD, DEFAULT_IOU_THRESHOLD};
use serde::{Deserialize, Serialize};

use crate::commands::convert::Labels;
use crate::commands::layers;
use crate::report::{write, write_json};
use crate::Common;

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of `<id>.txt` files with `class cx cy w h` lines.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Directory of `<id>.txt` files with `class conf cx cy w h` lines.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// IoU needed for a match (default 0.5).
    #[arg(long)]
    iou_threshold: Option<f64>,
    /// Confidence cut for precision, recall and F1 (AP uses every detection).
    #[arg(long)]
    conf_threshold: Option<f64>,
    /// Label space of the class ids, for display names.
    #[arg(long, value_enum)]
    labels: Option<Labels>,
    /// Receives `eval.json` and `eval.csv`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Deserialize, Serialize)]
struct EvalConfig {
    ground_truth: PathBuf,
    detections: PathBuf,
    #[serde(default = "default_iou")]
    iou_threshold: f64,
    #[serde(default = "default_conf")]
    conf_threshold: f64,
    #[serde(default)]
    labels: LabelSpace,
    #[serde(default)]
    output: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
}

fn default_iou() -> f64 {
    DEFAULT_IOU_THRESHOLD
}

fn default_conf() -> f64 {
    DEFAULT_CONF_THRESHOLD
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    config: &'a EvalConfig,
    report: &'a EvalReport,
    missing: &'a [String],
}

pub fn run(args: EvalArgs) -> Result<u8> {
    let mut l = layers(&args.common, "eval_detect")?;
    l.set_path("ground_truth", args.ground_truth.as_deref())
        .set_path("detections", args.detections.as_deref())
        .set("iou_threshold", args.iou_threshold)
        .set("conf_threshold", args.conf_threshold)
        .set("labels", args.labels.map(|x| x.key()))
        .set_path("output", args.output.as_deref());
    let cfg: EvalConfig = l.finish()?;

    let (gts, ids) = load_ground_truth_dir(&cfg.ground_truth)?;
    let (dets, missing) = load_detections_dir(&cfg.detections, &ids)?;
    let report = evaluate(&dets, &gts, cfg.iou_threshold, cfg.conf_threshold)?;
    if let Some(dir) = &cfg.output {
        write(&dir.join("eval.csv"), report.to_csv().as_bytes())?;
        write_json(&dir.join("eval.json"), &EvalOutput { config: &cfg, report: &report, missing: &missing })?;
    }
    let space = cfg.labels;
    let names = move |c: u32| space.name(c);
    print!("{}", report.to_table(Some(&names)));
    for id in &missing {
        eprintln!("missing detections for `{id}`, scored as empty");
    }
    Ok(if missing.is_empty() { 0 } else { 2 })
}
