//! Per-image text files in normalized center form.
//!
//! Detections: `class_id confidence cx cy w h`. Ground truth: `class_id cx cy w h`.
//! Blank lines and lines starting with `#` are ignored. The image id is the
//! file stem.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::bbox::{BBox, Detection, GroundTruth};

fn fields<const N: usize>(line: &str, what: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != N {
        return Err(Error::Parse(format!(
            "{what} line needs {N} fields, got {}: `{line}`",
            parts.len()
        )));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .parse()
            .map_err(|_| Error::Parse(format!("bad number `{p}` in `{line}`")))?;
    }
    Ok(out)
}

fn class_id(v: f64) -> Result<u32> {
    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
        return Err(Error::Parse(format!("bad class id {v}")));
    }
    Ok(v as u32)
}

pub fn parse_detection_line(image_id: &str, line: &str) -> Result<Detection> {
    let [c, conf, cx, cy, w, h] = fields::<6>(line, "detection")?;
    Detection::new(image_id, class_id(c)?, conf, BBox::from_center(cx, cy, w, h)?)
}

pub fn parse_ground_truth_line(image_id: &str, line: &str) -> Result<GroundTruth> {
    let [c, cx, cy, w, h] = fields::<5>(line, "ground truth")?;
    Ok(GroundTruth::new(image_id, class_id(c)?, BBox::from_center(cx, cy, w, h)?))
}

pub fn format_detection_line(d: &Detection) -> String {
    let (cx, cy) = d.bbox.center();
    format!(
        "{} {:.6} {:.6} {:.6} {:.6} {:.6}",
        d.class_id,
        d.confidence,
        cx,
        cy,
        d.bbox.width(),
        d.bbox.height()
    )
}

fn parse_lines<T>(text: &str, path: &Path, mut f: impl FnMut(&str) -> Result<T>) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            f(l.trim()).map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = stem(path);
    parse_lines(&text, path, |l| parse_detection_line(&id, l))
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruth>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = stem(path);
    parse_lines(&text, path, |l| parse_ground_truth_line(&id, l))
}

/// Sorted `.txt` files in `dir`.
pub fn txt_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "txt") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Ground truth for every `.txt` file in `dir`, with the sorted image ids.
/// An empty file is an image with no objects.
pub fn load_ground_truth_dir(dir: &Path) -> Result<(Vec<GroundTruth>, Vec<String>)> {
    let mut gts = Vec::new();
    let mut ids = Vec::new();
    for p in txt_files(dir)? {
        ids.push(stem(&p));
        gts.extend(read_ground_truth(&p)?);
    }
    Ok((gts, ids))
}

/// Detections for `image_ids` from `dir/<id>.txt`. Ids without a file are
/// returned in the second list and contribute no detections.
pub fn load_detections_dir(dir: &Path, image_ids: &[String]) -> Result<(Vec<Detection>, Vec<String>)> {
    let mut dets = Vec::new();
    let mut missing = Vec::new();
    for id in image_ids {
        let p = dir.join(format!("{id}.txt"));
        if p.is_file() {
            dets.extend(read_detections(&p)?);
        } else {
            missing.push(id.clone());
        }
    }
    Ok((dets, missing))
}
