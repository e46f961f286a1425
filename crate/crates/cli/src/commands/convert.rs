use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use nightsign::dataset::{
    parse_gtsdb_gt, parse_gtsrb_csv, write_yolo_dataset, LabelSpace, ParseOutcome, RowError, GTSDB_IMAGE_SIZE,
};
use serde::{Deserialize, Serialize};

use crate::commands::layers;
use crate::report::{table, write_json};
use crate::Common;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Semicolon-separated `GT-*.csv` files (one file, or a directory tree).
    Gtsrb,
    /// Detection benchmark `gt.txt`.
    Gtsdb,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Labels {
    Fine,
    Broad,
}

impl Labels {
    pub(crate) fn key(self) -> &'static str {
        match self {
            Labels::Fine => "fine",
            Labels::Broad => "broad",
        }
    }
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Annotation file, or for GTSRB a directory searched for `GT-*.csv`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Receives `<image>.txt` label files, `classes.names` and `conversion.json`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    labels: Option<Labels>,
    /// GTSDB frame width in pixels.
    #[arg(long)]
    image_width: Option<u32>,
    /// GTSDB frame height in pixels.
    #[arg(long)]
    image_height: Option<u32>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ConvertConfig {
    format: Format,
    input: PathBuf,
    output: PathBuf,
    #[serde(default)]
    labels: LabelSpace,
    #[serde(default = "default_w")]
    image_width: u32,
    #[serde(default = "default_h")]
    image_height: u32,
    #[serde(default)]
    seed: u64,
}

fn default_w() -> u32 {
    GTSDB_IMAGE_SIZE.0
}

fn default_h() -> u32 {
    GTSDB_IMAGE_SIZE.1
}

#[derive(Serialize)]
struct FileErrors<'a> {
    file: String,
    errors: &'a [RowError],
}

#[derive(Serialize)]
struct ConvertReport<'a> {
    config: &'a ConvertConfig,
    annotations: usize,
    label_files: usize,
    clamped: usize,
    errors: Vec<FileErrors<'a>>,
}

/// `GT-*.csv` files directly in `dir` or one level down, sorted.
fn gtsrb_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let is_gt = |p: &Path| {
        p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("GT-") && n.ends_with(".csv"))
    };
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = entry?.path();
        if p.is_dir() {
            for e in std::fs::read_dir(&p)? {
                let q = e?.path();
                if is_gt(&q) {
                    out.push(q);
                }
            }
        } else if is_gt(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn run(args: ConvertArgs) -> Result<u8> {
    let mut l = layers(&args.common, "convert")?;
    l.set("format", args.format.map(|f| if f == Format::Gtsrb { "gtsrb" } else { "gtsdb" }))
        .set_path("input", args.input.as_deref())
        .set_path("output", args.output.as_deref())
        .set("labels", args.labels.map(Labels::key))
        .set("image_width", crate::config::u(args.image_width))
        .set("image_height", crate::config::u(args.image_height));
    let cfg: ConvertConfig = l.finish()?;

    let mut outcomes: Vec<(String, ParseOutcome)> = Vec::new();
    match cfg.format {
        Format::Gtsrb if cfg.input.is_dir() => {
            let files = gtsrb_files(&cfg.input)?;
            if files.is_empty() {
                bail!("no GT-*.csv files under {}", cfg.input.display());
            }
            for f in files {
                let text = std::fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
                let mut o = parse_gtsrb_csv(&text).with_context(|| format!("parsing {}", f.display()))?;
                // image names repeat across class folders
                if let Some(folder) = f.parent().filter(|p| *p != cfg.input).and_then(|p| p.file_name()) {
                    for a in &mut o.annotations {
                        a.filename = format!("{}_{}", folder.to_string_lossy(), a.filename);
                    }
                }
                outcomes.push((f.display().to_string(), o));
            }
        }
        Format::Gtsrb => {
            let text = std::fs::read_to_string(&cfg.input).with_context(|| format!("reading {}", cfg.input.display()))?;
            let o = parse_gtsrb_csv(&text).with_context(|| format!("parsing {}", cfg.input.display()))?;
            outcomes.push((cfg.input.display().to_string(), o));
        }
        Format::Gtsdb => {
            let text = std::fs::read_to_string(&cfg.input).with_context(|| format!("reading {}", cfg.input.display()))?;
            let o = parse_gtsdb_gt(&text, (cfg.image_width, cfg.image_height));
            outcomes.push((cfg.input.display().to_string(), o));
        }
    }

    let annotations: Vec<_> = outcomes.iter().flat_map(|(_, o)| o.annotations.iter().cloned()).collect();
    let written = write_yolo_dataset(&annotations, &cfg.output, cfg.labels)?;
    let report = ConvertReport {
        config: &cfg,
        annotations: annotations.len(),
        label_files: written.len(),
        clamped: outcomes.iter().map(|(_, o)| o.clamped).sum(),
        errors: outcomes
            .iter()
            .filter(|(_, o)| !o.errors.is_empty())
            .map(|(f, o)| FileErrors { file: f.clone(), errors: &o.errors })
            .collect(),
    };
    write_json(&cfg.output.join("conversion.json"), &report)?;

    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|(f, o)| {
            vec![
                f.clone(),
                o.annotations.len().to_string(),
                o.clamped.to_string(),
                o.errors.len().to_string(),
            ]
        })
        .collect();
    print!("{}", table(&["file", "annotations", "clamped", "errors"], &rows));
    println!("{} label files in {}", written.len(), cfg.output.display());
    let n_err: usize = outcomes.iter().map(|(_, o)| o.errors.len()).sum();
    for (f, o) in &outcomes {
        for e in &o.errors {
            eprintln!("skipped {f}:{}: {}", e.line, e.message);
        }
    }
    Ok(if n_err == 0 { 0 } else { 2 })
}
