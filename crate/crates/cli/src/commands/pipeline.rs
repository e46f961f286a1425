use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use nightsign::pipeline::{run_pipeline, PipelineConfig};
use toml::{Table, Value};

use crate::commands::convert::Labels;
use crate::commands::layers;
use crate::config::u;
use crate::Common;

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of raw `.ppm`/`.png` images. Never modified.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Directory of `<id>.txt` ground-truth files.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Enhancer checkpoint written by `train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Receives enhanced images, detections and reports. Must differ from the inputs.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Shell command run per image; `{image}`, `{id}`, `{images}` and
    /// `{output}` are substituted and `{output}/{id}.txt` must be written.
    #[arg(long, group = "detector")]
    detector_cmd: Option<String>,
    /// Precomputed detection directory for the raw arm.
    #[arg(long, group = "detector", requires = "precomputed_enhanced")]
    precomputed_raw: Option<PathBuf>,
    /// Precomputed detection directory for the enhanced arm.
    #[arg(long)]
    precomputed_enhanced: Option<PathBuf>,
    /// Stub fixture with `image_id class conf cx cy w h` lines.
    #[arg(long, group = "detector")]
    stub: Option<PathBuf>,
    /// Separate stub fixture for the enhanced arm.
    #[arg(long, requires = "stub")]
    stub_enhanced: Option<PathBuf>,
    /// Enhance only images the quality selector flags.
    #[arg(long)]
    select: bool,
    /// Selector threshold on mean luminance in [0, 1].
    #[arg(long, requires = "select")]
    luminance: Option<f64>,
    /// Selector threshold on Laplacian variance (8-bit scale).
    #[arg(long, requires = "select")]
    blur: Option<f64>,
    /// IoU needed for a match (default 0.5).
    #[arg(long)]
    iou_threshold: Option<f64>,
    /// Confidence cut for precision, recall and F1 (default 0.25).
    #[arg(long)]
    conf_threshold: Option<f64>,
    /// Enhance in square tiles of this side.
    #[arg(long)]
    tile: Option<usize>,
    /// Label space of the class ids, for display names.
    #[arg(long, value_enum)]
    labels: Option<Labels>,
}

fn detector_table(args: &PipelineArgs) -> Option<Table> {
    let mut t = Table::new();
    let path = |p: &PathBuf| Value::String(p.display().to_string());
    if let Some(c) = &args.detector_cmd {
        t.insert("mode".into(), "external".into());
        t.insert("command".into(), c.clone().into());
    } else if let (Some(r), Some(e)) = (&args.precomputed_raw, &args.precomputed_enhanced) {
        t.insert("mode".into(), "precomputed".into());
        t.insert("raw".into(), path(r));
        t.insert("enhanced".into(), path(e));
    } else if let Some(s) = &args.stub {
        t.insert("mode".into(), "stub".into());
        t.insert("raw".into(), path(s));
        if let Some(e) = &args.stub_enhanced {
            t.insert("enhanced".into(), path(e));
        }
    } else {
        return None;
    }
    Some(t)
}

pub fn run(args: PipelineArgs) -> Result<u8> {
    let mut l = layers(&args.common, "pipeline")?;
    l.set_path("images_dir", args.images.as_deref())
        .set_path("ground_truth_dir", args.ground_truth.as_deref())
        .set_path("checkpoint", args.checkpoint.as_deref())
        .set_path("output_dir", args.output.as_deref())
        .set("iou_threshold", args.iou_threshold)
        .set("conf_threshold", args.conf_threshold)
        .set("tile", u(args.tile))
        .set("labels", args.labels.map(|x| x.key()));
    if let Some(t) = detector_table(&args) {
        // a flag-chosen detector replaces the file's one wholesale
        l.remove("detector");
        l.set("detector", Some(Value::Table(t)));
    }
    if l.get("detector").is_none() {
        bail!("no detector configured: use --detector-cmd, --precomputed-raw/--precomputed-enhanced or --stub");
    }
    if args.select {
        let mut th = match l.remove("routing") {
            Some(Value::Table(mut r)) => match r.remove("selector") {
                Some(Value::Table(s)) => s,
                _ => Table::new(),
            },
            _ => Table::new(),
        };
        if let Some(v) = args.luminance {
            th.insert("luminance".into(), v.into());
        }
        if let Some(v) = args.blur {
            th.insert("blur".into(), v.into());
        }
        let mut r = Table::new();
        r.insert("selector".into(), Value::Table(th));
        l.set("routing", Some(Value::Table(r)));
    }
    let cfg: PipelineConfig = l.finish()?;

    let report = run_pipeline(&cfg)?;
    print!("{}", report.to_text());
    println!("reports written to {}", cfg.output_dir.display());
    Ok(report.exit_code() as u8)
}
