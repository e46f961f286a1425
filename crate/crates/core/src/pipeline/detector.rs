use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::io::{format_detection_line, parse_detection_line};
use crate::eval::Detection;

/// Where detections come from. Both arms always use the same detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DetectorMode {
    /// Shell command run once per image. Placeholders: `{image}` (image
    /// path), `{id}` (file stem), `{images}` (the arm's image directory) and
    /// `{output}` (directory that must receive `<id>.txt`).
    External { command: String },
    /// Detection files already produced for each arm.
    Precomputed { raw: PathBuf, enhanced: PathBuf },
    /// Fixture lookup tables; the enhanced arm reuses `raw` when unset.
    Stub { raw: PathBuf, enhanced: Option<PathBuf> },
}

/// Test double that replays detections from a fixture file with lines
/// `image_id class conf cx cy w h`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StubDetector {
    table: BTreeMap<String, Vec<Detection>>,
}

impl StubDetector {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, rest) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::Parse(format!("fixture line {}: missing fields", i + 1)))?;
            let d = parse_detection_line(id, rest.trim())
                .map_err(|e| Error::Parse(format!("fixture line {}: {e}", i + 1)))?;
            table.entry(id.to_string()).or_default().push(d);
        }
        Ok(Self { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn detect(&self, image_id: &str) -> &[Detection] {
        self.table.get(image_id).map_or(&[], Vec::as_slice)
    }

    /// Writes `<id>.txt` for every id, empty when the fixture has none.
    pub fn write_all(&self, ids: &[String], out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        for id in ids {
            let mut body = String::new();
            for d in self.detect(id) {
                let _ = writeln!(body, "{}", format_detection_line(d));
            }
            let p = out_dir.join(format!("{id}.txt"));
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

pub(crate) fn fill_template(template: &str, image: &Path, id: &str, images: &Path, output: &Path) -> String {
    template
        .replace("{image}", &shell_quote(&image.to_string_lossy()))
        .replace("{images}", &shell_quote(&images.to_string_lossy()))
        .replace("{output}", &shell_quote(&output.to_string_lossy()))
        .replace("{id}", &shell_quote(id))
}

/// Runs the external detector on every image of one arm. The first failing
/// image aborts the run.
pub fn run_external(
    template: &str,
    images: &[(String, PathBuf)],
    images_dir: &Path,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (id, path) in images {
        let cmd = fill_template(template, path, id, images_dir, out_dir);
        let out = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .output()
            .map_err(|e| Error::Detector {
                image_id: id.clone(),
                message: format!("could not start `{cmd}`: {e}"),
            })?;
        if !out.status.success() {
            return Err(Error::Detector {
                image_id: id.clone(),
                message: format!(
                    "`{cmd}` exited with {}: {}",
                    out.status,
                    String::from_utf8_lossy(&out.stderr).trim()
                ),
            });
        }
    }
    Ok(())
}
