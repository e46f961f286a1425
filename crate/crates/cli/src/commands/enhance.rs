use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use nightsign::dataset::list_images;
use nightsign::mirnet::ModelParams;
use nightsign::pipeline::enhance_files;
use serde::{Deserialize, Serialize};

use crate::commands::layers;
use crate::config::u;
use crate::report::table;
use crate::Common;

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// An image file or a directory of `.ppm`/`.png` images.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Receives the enhanced images and `manifest.json`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Process in square tiles of this side (a multiple of the network divisor).
    #[arg(long)]
    tile: Option<usize>,
}

#[derive(Debug, Deserialize, Serialize)]
struct EnhanceConfig {
    checkpoint: PathBuf,
    input: PathBuf,
    output: PathBuf,
    #[serde(default)]
    tile: Option<usize>,
    #[serde(default)]
    seed: u64,
}

pub fn run(args: EnhanceArgs) -> Result<u8> {
    let mut l = layers(&args.common, "enhance")?;
    l.set_path("checkpoint", args.checkpoint.as_deref())
        .set_path("input", args.input.as_deref())
        .set_path("output", args.output.as_deref())
        .set("tile", u(args.tile));
    let cfg: EnhanceConfig = l.finish()?;

    let inputs = if cfg.input.is_dir() { list_images(&cfg.input)? } else { vec![cfg.input.clone()] };
    if inputs.is_empty() {
        bail!("no images in {}", cfg.input.display());
    }
    let params = ModelParams::load(&cfg.checkpoint)?;
    let manifest = enhance_files(&params, &inputs, &cfg.output, cfg.tile)?;
    let rows: Vec<Vec<String>> = manifest
        .iter()
        .map(|m| {
            let p = m.padding;
            vec![
                m.id.clone(),
                format!("{}x{}", m.width, m.height),
                format!("{} {} {} {}", p.top, p.bottom, p.left, p.right),
                m.output.display().to_string(),
            ]
        })
        .collect();
    print!("{}", table(&["image", "size", "pad t/b/l/r", "output"], &rows));
    Ok(0)
}
