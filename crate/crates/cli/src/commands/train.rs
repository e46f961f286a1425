use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use nightsign::dataset::{list_images, load_image};
use nightsign::mirnet::{ModelParams, NetConfig};
use nightsign::train::{synthetic_dark_pairs, train, train_from, ImagePair, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::commands::layers;
use crate::config::u;
use crate::report::{table, write_json};
use crate::Common;

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 3 groups, 2 blocks each, 3 scales, 64 channels.
    #[default]
    Full,
    /// 1 group, 1 block, 2 scales, 8 channels.
    Test,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Directory with `low/` and `high/` subdirectories of same-named images.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Validation directory, same layout as `--data`.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Train on this many generated darkened pairs instead of `--data`.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Side of the generated images.
    #[arg(long)]
    synthetic_size: Option<usize>,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Receives `curve.csv`, `curve.json`, `last.ckpt` and `model.ckpt`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Network size preset (default full); `[train.net]` and the flags below refine it.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Passes over the training pairs (default 40).
    #[arg(long)]
    epochs: Option<usize>,
    /// Side of the square random training crop (default 128).
    #[arg(long)]
    crop: Option<usize>,
    /// Crops per optimizer step (default 4).
    #[arg(long)]
    batch: Option<usize>,
    /// Adam learning rate (default 2e-4).
    #[arg(long)]
    lr: Option<f64>,
    /// Recursive residual groups.
    #[arg(long)]
    n_rrg: Option<usize>,
    /// Multi-scale residual blocks per group.
    #[arg(long)]
    n_mrb: Option<usize>,
    /// Resolution streams per block.
    #[arg(long)]
    n_scales: Option<usize>,
    /// Channels of the full-resolution stream.
    #[arg(long)]
    base_channels: Option<usize>,
}

#[derive(Debug, Deserialize, Serialize)]
struct TrainCmdConfig {
    #[serde(default)]
    data: Option<PathBuf>,
    #[serde(default)]
    val: Option<PathBuf>,
    #[serde(default)]
    synthetic: Option<usize>,
    #[serde(default = "default_size")]
    synthetic_size: usize,
    #[serde(default)]
    init: Option<PathBuf>,
    output: PathBuf,
    #[serde(default)]
    preset: Preset,
    /// Filled from `preset`, then from `[train.net]`, then from flags.
    net: NetConfig,
    #[serde(flatten)]
    training: TrainConfig,
}

fn default_size() -> usize {
    64
}

/// Pairs `low/<name>` with `high/<name>`.
fn load_pairs(dir: &Path) -> Result<Vec<ImagePair>> {
    let low = list_images(&dir.join("low"))?;
    if low.is_empty() {
        bail!("no images in {}", dir.join("low").display());
    }
    low.iter()
        .map(|lp| {
            let name = lp.file_name().unwrap();
            let hp = dir.join("high").join(name);
            let id = Path::new(name).file_stem().unwrap().to_string_lossy().into_owned();
            let pair = ImagePair::new(id, load_image(lp)?, load_image(&hp).with_context(|| format!("no match for {}", lp.display()))?)?;
            Ok(pair)
        })
        .collect()
}

pub fn run(args: TrainArgs) -> Result<u8> {
    let mut l = layers(&args.common, "train")?;
    l.set_path("data", args.data.as_deref())
        .set_path("val", args.val.as_deref())
        .set("synthetic", u(args.synthetic))
        .set("synthetic_size", u(args.synthetic_size))
        .set_path("init", args.init.as_deref())
        .set_path("output", args.output.as_deref())
        .set("epochs", u(args.epochs))
        .set("crop", u(args.crop))
        .set("batch", u(args.batch))
        .set("lr", args.lr)
        .set("net.n_rrg", u(args.n_rrg))
        .set("net.n_mrb_per_rrg", u(args.n_mrb))
        .set("net.n_scales", u(args.n_scales))
        .set("net.base_channels", u(args.base_channels));
    if let Some(p) = args.preset {
        l.set("preset", Some(if matches!(p, Preset::Test) { "test" } else { "full" }));
    }
    let preset = match l.get("preset").and_then(|v| v.as_str()) {
        Some("test") => NetConfig::test(),
        Some("full") | None => NetConfig::full(),
        Some(other) => bail!("unknown preset `{other}`"),
    };
    let seed = l.get("seed").and_then(|v| v.as_integer()).unwrap_or(0);
    let mut base = toml::Table::try_from(preset)?;
    base.insert("seed".into(), seed.into());
    l.underlay("net", base);
    let mut cfg: TrainCmdConfig = l.finish()?;
    cfg.training.curve_output = Some(cfg.output.join("curve.csv"));
    cfg.training.checkpoint_dir = Some(cfg.output.clone());

    let (pairs, val) = match (&cfg.data, cfg.synthetic) {
        (Some(_), Some(_)) => bail!("give either a data directory or a synthetic pair count, not both"),
        (Some(d), None) => {
            let v = cfg.val.as_ref().context("a validation directory is required with a data directory")?;
            (load_pairs(d)?, load_pairs(v)?)
        }
        (None, Some(n)) => {
            let s = cfg.synthetic_size;
            (
                synthetic_dark_pairs(n, s, s, cfg.training.seed),
                synthetic_dark_pairs((n / 5).max(1), s, s, cfg.training.seed ^ 0x5eed_f7a1),
            )
        }
        (None, None) => bail!("nothing to train on: set a data directory or a synthetic pair count"),
    };

    let (params, log) = match &cfg.init {
        // the checkpoint's stored shape wins over any net settings
        Some(p) => train_from(ModelParams::load(p)?, &pairs, &val, &cfg.training)?,
        None => train(&pairs, &val, &cfg.net, &cfg.training)?,
    };
    params.save(cfg.output.join("model.ckpt"))?;
    write_json(&cfg.output.join("curve.json"), &log)?;
    write_json(&cfg.output.join("train_config.json"), &cfg)?;

    let rows: Vec<Vec<String>> = log
        .rows
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                format!("{:.6}", r.train_loss),
                format!("{:.6}", r.val_loss),
                format!("{:.2}", r.val_psnr_db),
            ]
        })
        .collect();
    print!("{}", table(&["epoch", "train_loss", "val_loss", "val_psnr_db"], &rows));
    println!(
        "{} parameters, {} training pairs, {} validation pairs; checkpoint {}",
        params.param_count(),
        pairs.len(),
        val.len(),
        cfg.output.join("model.ckpt").display()
    );
    Ok(0)
}
