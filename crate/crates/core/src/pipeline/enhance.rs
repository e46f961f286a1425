use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{load_image, save_image, ImageKind};
use crate::error::{Error, Result};
use crate::mirnet::{enhance, ModelParams};
use crate::tensor::Tensor;
use crate::train::{reflect_pad_to_multiple, unpad, Padding};

/// Enhances one `[1, 3, h, w]` image.
///
/// The image is reflect-padded to the network divisor and cropped back
/// afterwards. With `tile`, the padded frame is processed in independent
/// `tile x tile` pieces (edge pieces may be smaller); `tile` must be a
/// multiple of the divisor.
pub fn enhance_image(params: &ModelParams, image: &Tensor, tile: Option<usize>) -> Result<(Tensor, Padding)> {
    if image.batch() != 1 || image.channels() != 3 {
        return Err(Error::Config(format!("expected a [1, 3, h, w] image, got {:?}", image.dims())));
    }
    let d = params.config().divisor();
    let (padded, pad) = reflect_pad_to_multiple(image, d);
    let out = match tile {
        None => enhance(params, &padded)?,
        Some(t) => {
            if t == 0 || t % d != 0 {
                return Err(Error::Config(format!("tile {t} must be a positive multiple of {d}")));
            }
            let [_, c, h, w] = padded.dims();
            let mut out = Tensor::zeros([1, c, h, w]);
            for top in (0..h).step_by(t) {
                for left in (0..w).step_by(t) {
                    let (th, tw) = (t.min(h - top), t.min(w - left));
                    let piece = enhance(params, &padded.crop(top, left, th, tw)?)?;
                    for ch in 0..c {
                        for y in 0..th {
                            for x in 0..tw {
                                out.set(0, ch, top + y, left + x, piece.at(0, ch, y, x));
                            }
                        }
                    }
                }
            }
            out
        }
    };
    Ok((unpad(&out, pad)?, pad))
}

/// Enhances a batch of images, spreading them over the available cores.
/// Results come back in input order and do not depend on the thread count.
pub fn enhance_batch(params: &ModelParams, images: &[Tensor], tile: Option<usize>) -> Result<Vec<(Tensor, Padding)>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(images.len().max(1));
    let chunk = images.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = images
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|img| enhance_image(params, img, tile))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(images.len());
        for h in handles {
            out.extend(h.join().expect("enhancement worker panicked")?);
        }
        Ok(out)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancedImage {
    pub id: String,
    pub source: PathBuf,
    pub output: PathBuf,
    pub height: usize,
    pub width: usize,
    pub padding: Padding,
}

/// Loads `inputs`, enhances them and writes each result to `out_dir` under
/// the source file name (same format). Also writes `manifest.json`.
pub fn enhance_files(
    params: &ModelParams,
    inputs: &[PathBuf],
    out_dir: &Path,
    tile: Option<usize>,
) -> Result<Vec<EnhancedImage>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let images = inputs.iter().map(|p| load_image(p)).collect::<Result<Vec<_>>>()?;
    let results = enhance_batch(params, &images, tile)?;
    let mut manifest = Vec::with_capacity(inputs.len());
    for (src, (img, padding)) in inputs.iter().zip(results) {
        ImageKind::from_path(src).ok_or_else(|| Error::Unsupported(src.display().to_string()))?;
        let name = src
            .file_name()
            .ok_or_else(|| Error::Config(format!("bad image path {}", src.display())))?;
        let output = out_dir.join(name);
        if output == *src {
            return Err(Error::Config(format!("refusing to overwrite input {}", src.display())));
        }
        save_image(&output, &img)?;
        manifest.push(EnhancedImage {
            id: Path::new(name).file_stem().unwrap_or_default().to_string_lossy().into_owned(),
            source: src.clone(),
            output,
            height: img.height(),
            width: img.width(),
            padding,
        });
    }
    let mpath = out_dir.join("manifest.json");
    std::fs::write(&mpath, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}
