use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{list_images, load_image, select_low_quality, LabelSpace, QualityScore, QualityThresholds};
use crate::error::{Error, Result};
use crate::eval::io::{load_detections_dir, read_ground_truth};
use crate::eval::{evaluate, EvalReport, DEFAULT_CONF_THRESHOLD, DEFAULT_IOU_THRESHOLD};
use crate::mirnet::ModelParams;
use crate::pipeline::detector::{run_external, DetectorMode, StubDetector};
use crate::pipeline::enhance::{enhance_files, EnhancedImage};

/// Which images go through the enhancer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Routing {
    All,
    Selector(QualityThresholds),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Directory of `.ppm`/`.png` inputs. Never written to.
    pub images_dir: PathBuf,
    /// One `<id>.txt` in normalized ground-truth format per image.
    pub ground_truth_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub detector: DetectorMode,
    #[serde(default = "default_routing")]
    pub routing: Routing,
    #[serde(default = "default_iou")]
    pub iou_threshold: f64,
    #[serde(default = "default_conf")]
    pub conf_threshold: f64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tile: Option<usize>,
    #[serde(default)]
    pub labels: LabelSpace,
    #[serde(default)]
    pub seed: u64,
}

fn default_routing() -> Routing {
    Routing::All
}

fn default_iou() -> f64 {
    DEFAULT_IOU_THRESHOLD
}

fn default_conf() -> f64 {
    DEFAULT_CONF_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDelta {
    pub class_id: u32,
    pub raw_ap: Option<f64>,
    pub enhanced_ap: Option<f64>,
    /// `enhanced - raw` when both arms define an AP.
    pub delta_ap: Option<f64>,
}

/// The two arms side by side. Every delta is `enhanced - raw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub raw: EvalReport,
    pub enhanced: EvalReport,
    pub class_deltas: Vec<ClassDelta>,
    pub delta_map: f64,
    pub delta_precision: f64,
    pub delta_recall: f64,
    pub delta_f1: f64,
}

pub fn compare(raw: EvalReport, enhanced: EvalReport) -> Comparison {
    let classes: BTreeSet<u32> = raw.per_class.keys().chain(enhanced.per_class.keys()).copied().collect();
    let class_deltas = classes
        .into_iter()
        .map(|c| {
            let raw_ap = raw.per_class.get(&c).and_then(|s| s.ap);
            let enhanced_ap = enhanced.per_class.get(&c).and_then(|s| s.ap);
            ClassDelta {
                class_id: c,
                raw_ap,
                enhanced_ap,
                delta_ap: raw_ap.zip(enhanced_ap).map(|(r, e)| e - r),
            }
        })
        .collect();
    Comparison {
        delta_map: enhanced.map_at_iou - raw.map_at_iou,
        delta_precision: enhanced.precision - raw.precision,
        delta_recall: enhanced.recall - raw.recall,
        delta_f1: enhanced.f1 - raw.f1,
        class_deltas,
        raw,
        enhanced,
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:.2}", 100.0 * v))
}

fn signed_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:+.2}", 100.0 * v))
}

fn opt6(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

impl Comparison {
    pub fn delta_table(&self, labels: LabelSpace) -> String {
        let mut s = String::new();
        let width = self
            .class_deltas
            .iter()
            .map(|d| labels.name(d.class_id).len())
            .max()
            .unwrap_or(5)
            .max(5);
        let _ = writeln!(s, "{:<width$}  {:>8}  {:>8}  {:>8}", "Class", "raw AP", "enh AP", "dAP");
        for d in &self.class_deltas {
            let _ = writeln!(
                s,
                "{:<width$}  {:>8}  {:>8}  {:>8}",
                labels.name(d.class_id),
                pct(d.raw_ap),
                pct(d.enhanced_ap),
                signed_pct(d.delta_ap)
            );
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>8}  {:>8}  {:>8}",
            "mAP",
            pct(Some(self.raw.map_at_iou)),
            pct(Some(self.enhanced.map_at_iou)),
            signed_pct(Some(self.delta_map))
        );
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,raw_ap,enhanced_ap,delta_ap\n");
        for d in &self.class_deltas {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                d.class_id,
                opt6(d.raw_ap),
                opt6(d.enhanced_ap),
                opt6(d.delta_ap)
            );
        }
        let _ = writeln!(
            s,
            "all,{:.6},{:.6},{:.6}",
            self.raw.map_at_iou, self.enhanced.map_at_iou, self.delta_map
        );
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub comparison: Comparison,
    pub quality: Vec<QualityScore>,
    pub routed: Vec<String>,
    pub enhanced_images: Vec<EnhancedImage>,
    /// Images without a detection file, scored as having no detections.
    pub missing_raw: Vec<String>,
    pub missing_enhanced: Vec<String>,
    pub labels: LabelSpace,
    pub seed: u64,
}

impl ComparisonReport {
    pub fn is_complete(&self) -> bool {
        self.missing_raw.is_empty() && self.missing_enhanced.is_empty()
    }

    /// 0 when every image was scored normally, 2 when some were skipped.
    pub fn exit_code(&self) -> i32 {
        if self.is_complete() {
            0
        } else {
            2
        }
    }

    pub fn to_text(&self) -> String {
        let names = |c: u32| self.labels.name(c);
        let c = &self.comparison;
        let mut s = String::new();
        let _ = writeln!(s, "== without enhancement ==\n{}", c.raw.to_table(Some(&names)));
        let _ = writeln!(s, "== with enhancement ==\n{}", c.enhanced.to_table(Some(&names)));
        let _ = writeln!(s, "== difference ==\n{}", c.delta_table(self.labels));
        let _ = writeln!(
            s,
            "routed to enhancer: {} of {} images",
            self.routed.len(),
            self.quality.len()
        );
        for (arm, missing) in [("raw", &self.missing_raw), ("enhanced", &self.missing_enhanced)] {
            if !missing.is_empty() {
                let _ = writeln!(s, "missing {arm} detections: {}", missing.join(", "));
            }
        }
        s
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn stem(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

/// Runs both arms and writes everything under `config.output_dir`:
///
/// ```text
/// enhanced/            enhanced images (routed) and copies of the others, manifest.json
/// detections/raw/      detector output per arm (external and stub modes)
/// detections/enhanced/
/// report.json  report.csv  report.txt  quality.csv
/// ```
pub fn run_pipeline(config: &PipelineConfig) -> Result<ComparisonReport> {
    let out = &config.output_dir;
    if same_dir(out, &config.images_dir) || same_dir(out, &config.ground_truth_dir) {
        return Err(Error::Config("output directory must differ from the input directories".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let paths = list_images(&config.images_dir)?;
    if paths.is_empty() {
        return Err(Error::Config(format!("no .ppm/.png images in {}", config.images_dir.display())));
    }
    let ids: Vec<String> = paths.iter().map(|p| stem(p)).collect();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("image id `{}` appears twice", w[0])));
    }

    let thresholds = match config.routing {
        Routing::All => QualityThresholds::default(),
        Routing::Selector(t) => t,
    };
    let tensors = paths.iter().map(|p| load_image(p)).collect::<Result<Vec<_>>>()?;
    let quality = select_low_quality(ids.iter().map(String::as_str).zip(&tensors), &thresholds)?;
    drop(tensors);
    let routed_mask: Vec<bool> = match config.routing {
        Routing::All => vec![true; ids.len()],
        Routing::Selector(_) => quality.iter().map(|q| q.selected).collect(),
    };

    let params = ModelParams::load(&config.checkpoint)?;
    let enh_dir = out.join("enhanced");
    let routed_paths: Vec<PathBuf> = paths
        .iter()
        .zip(&routed_mask)
        .filter(|(_, &r)| r)
        .map(|(p, _)| p.clone())
        .collect();
    let enhanced_images = enhance_files(&params, &routed_paths, &enh_dir, config.tile)?;
    let mut enh_arm = Vec::with_capacity(paths.len());
    for (p, &r) in paths.iter().zip(&routed_mask) {
        let dst = enh_dir.join(p.file_name().expect("listed images have names"));
        if !r {
            fs::copy(p, &dst).map_err(|e| Error::io(&dst, e))?;
        }
        enh_arm.push((stem(p), dst));
    }
    let raw_arm: Vec<(String, PathBuf)> = paths.iter().map(|p| (stem(p), p.clone())).collect();

    let raw_det_dir = out.join("detections").join("raw");
    let enh_det_dir = out.join("detections").join("enhanced");
    let (raw_src, enh_src) = match &config.detector {
        DetectorMode::External { command } => {
            run_external(command, &raw_arm, &config.images_dir, &raw_det_dir)?;
            run_external(command, &enh_arm, &enh_dir, &enh_det_dir)?;
            (raw_det_dir, enh_det_dir)
        }
        DetectorMode::Precomputed { raw, enhanced } => (raw.clone(), enhanced.clone()),
        DetectorMode::Stub { raw, enhanced } => {
            let raw_stub = StubDetector::load(raw)?;
            let enh_stub = match enhanced {
                Some(p) => StubDetector::load(p)?,
                None => raw_stub.clone(),
            };
            raw_stub.write_all(&ids, &raw_det_dir)?;
            enh_stub.write_all(&ids, &enh_det_dir)?;
            (raw_det_dir, enh_det_dir)
        }
    };
    let (raw_dets, missing_raw) = load_detections_dir(&raw_src, &ids)?;
    let (enh_dets, missing_enhanced) = load_detections_dir(&enh_src, &ids)?;

    let mut gts = Vec::new();
    for id in &ids {
        let p = config.ground_truth_dir.join(format!("{id}.txt"));
        if !p.is_file() {
            return Err(Error::Config(format!("no ground truth file for image `{id}` ({})", p.display())));
        }
        gts.extend(read_ground_truth(&p)?);
    }

    let raw = evaluate(&raw_dets, &gts, config.iou_threshold, config.conf_threshold)?;
    let enhanced = evaluate(&enh_dets, &gts, config.iou_threshold, config.conf_threshold)?;
    let report = ComparisonReport {
        comparison: compare(raw, enhanced),
        routed: ids
            .iter()
            .zip(&routed_mask)
            .filter(|(_, &r)| r)
            .map(|(id, _)| id.clone())
            .collect(),
        quality,
        enhanced_images,
        missing_raw,
        missing_enhanced,
        labels: config.labels,
        seed: config.seed,
    };

    write(&out.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
    write(&out.join("report.csv"), report.comparison.to_csv())?;
    write(&out.join("report.txt"), report.to_text())?;
    let mut q = String::from("id,luminance,laplacian_var,selected,routed\n");
    for (score, routed) in report.quality.iter().zip(&routed_mask) {
        let _ = writeln!(
            q,
            "{},{:.6},{:.6},{},{}",
            score.id, score.luminance, score.laplacian_var, score.selected, routed
        );
    }
    write(&out.join("quality.csv"), q)?;
    Ok(report)
}

/// Per-class ΔAP keyed by class id, skipping classes undefined in either arm.
pub fn delta_ap_map(c: &Comparison) -> BTreeMap<u32, f64> {
    c.class_deltas
        .iter()
        .filter_map(|d| d.delta_ap.map(|v| (d.class_id, v)))
        .collect()
}
