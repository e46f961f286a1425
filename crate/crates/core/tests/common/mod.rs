//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance harness.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use nightsign::eval::{iou, BBox, Detection, GroundTruth};
use nightsign::mirnet::{NetConfig, SpatialPooling};
use nightsign::Tensor;
use rand::Rng;

pub fn random_tensor<R: Rng>(rng: &mut R, dims: [usize; 4], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(dims, |_, _, _, _| rng.gen_range(lo..hi))
}

/// Median by full sort; even counts average the two middle values.
pub fn median_oracle(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// AP by enumerating every confidence threshold: the interpolated precision
/// at recall level `r` is the best precision of any threshold whose recall
/// reaches `r`, integrated over the distinct recall levels.
pub fn ap_oracle(labels: &[(f64, bool)], n_gt: usize) -> f64 {
    let mut thresholds: Vec<f64> = labels.iter().map(|l| l.0).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pr: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let kept: Vec<bool> = labels.iter().filter(|l| l.0 >= t).map(|l| l.1).collect();
            let tp = kept.iter().filter(|&&b| b).count();
            (tp as f64 / n_gt as f64, tp as f64 / kept.len() as f64)
        })
        .collect();
    let mut levels: Vec<f64> = pr.iter().map(|p| p.0).filter(|&r| r > 0.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in levels {
        let best = pr
            .iter()
            .filter(|p| p.0 >= r)
            .map(|p| p.1)
            .fold(0.0, f64::max);
        ap += (r - prev) * best;
        prev = r;
    }
    ap
}

/// Enumerates every partial injective assignment of detections to ground
/// truths and returns the single one that satisfies the greedy rule when the
/// detections are visited by descending confidence (stable on ties).
pub fn brute_force_match(dets: &[Detection], gts: &[GroundTruth], thr: f64) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));

    let mut valid = Vec::new();
    let mut current = vec![None; dets.len()];
    enumerate(0, dets.len(), gts.len(), &mut current, &mut vec![false; gts.len()], &mut |a| {
        if satisfies_greedy(a, &order, dets, gts, thr) {
            valid.push(a.to_vec());
        }
    });
    assert_eq!(valid.len(), 1, "greedy rule must pick exactly one assignment");
    valid.pop().unwrap()
}

fn enumerate(
    i: usize,
    n: usize,
    m: usize,
    cur: &mut Vec<Option<usize>>,
    used: &mut Vec<bool>,
    visit: &mut dyn FnMut(&[Option<usize>]),
) {
    if i == n {
        visit(cur);
        return;
    }
    cur[i] = None;
    enumerate(i + 1, n, m, cur, used, visit);
    for g in 0..m {
        if !used[g] {
            used[g] = true;
            cur[i] = Some(g);
            enumerate(i + 1, n, m, cur, used, visit);
            used[g] = false;
        }
    }
    cur[i] = None;
}

fn satisfies_greedy(a: &[Option<usize>], order: &[usize], dets: &[Detection], gts: &[GroundTruth], thr: f64) -> bool {
    let mut taken = vec![false; gts.len()];
    for &d in order {
        let candidates: Vec<(usize, f64)> = (0..gts.len())
            .filter(|&g| !taken[g] && gts[g].image_id == dets[d].image_id)
            .map(|g| (g, iou(&dets[d].bbox, &gts[g].bbox)))
            .collect();
        let best_v = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        match a[d] {
            None => {
                if best_v >= thr {
                    return false;
                }
            }
            Some(g) => {
                if taken[g] || gts[g].image_id != dets[d].image_id {
                    return false;
                }
                let v = iou(&dets[d].bbox, &gts[g].bbox);
                let first_best = candidates.iter().find(|c| c.1 == best_v).map(|c| c.0);
                if v < thr || Some(g) != first_best {
                    return false;
                }
                taken[g] = true;
            }
        }
    }
    true
}

pub fn random_box<R: Rng>(rng: &mut R) -> BBox {
    let x = rng.gen_range(0.0..6.0);
    let y = rng.gen_range(0.0..6.0);
    let w = rng.gen_range(1.0..4.0);
    let h = rng.gen_range(1.0..4.0);
    BBox::new(x, y, x + w, y + h).unwrap()
}

fn conv(i: usize, o: usize, k: usize) -> usize {
    o * i * k * k + o
}

/// Parameter count from the block structure, written out by hand.
pub fn param_count_closed_form(cfg: &NetConfig) -> usize {
    let base = cfg.base_channels;
    let s = cfg.n_scales;
    let hidden = |c: usize| (c / cfg.ca_reduction).max(1);
    let maps = match cfg.spatial_pooling {
        SpatialPooling::Median => 1,
        SpatialPooling::AvgMax => 2,
    };
    let ch = |j: usize| base << j;
    let ca = |c: usize| conv(c, hidden(c), 1) + conv(hidden(c), c, 1);
    let sa = conv(maps, 1, cfg.sa_kernel);
    let dau = |c: usize| 2 * conv(c, c, 3) + ca(c) + sa + conv(2 * c, c, 1);
    let skff = |c: usize| conv(c, hidden(c), 1) + s * conv(hidden(c), c, 1);

    let mut mrb = conv(base, base, 3);
    for j in 0..s {
        mrb += 2 * dau(ch(j));
    }
    for j in 1..s {
        mrb += conv(ch(j - 1), ch(j), 1);
    }
    if s > 1 {
        for j in 0..s {
            for i in 0..s {
                if i != j {
                    mrb += conv(ch(i), ch(j), 1);
                }
            }
            mrb += skff(ch(j));
        }
        for i in 1..s {
            mrb += conv(ch(i), base, 1);
        }
        mrb += skff(base);
    }
    let rrg = cfg.n_mrb_per_rrg * mrb + conv(base, base, 3);
    conv(3, base, 3) + conv(base, 3, 3) + cfg.n_rrg * rrg
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

pub fn write(path: &Path, text: &str) {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p).unwrap();
    }
    fs::write(path, text).unwrap();
}

/// A small on-disk pipeline workspace: four 8x8 PPM images, one sign per
/// image (all class 3) and a zero-residual test-config checkpoint.
pub struct PipelineFixture {
    pub dir: tempfile::TempDir,
}

pub const FIXTURE_IDS: [&str; 4] = ["img0", "img1", "img2", "img3"];

/// Normalized ground-truth box of image `k`.
pub fn fixture_box(k: usize) -> (f64, f64, f64, f64) {
    (0.25 + 0.125 * k as f64, 0.5, 0.25, 0.375)
}

impl PipelineFixture {
    pub fn new() -> Self {
        use nightsign::dataset::encode_ppm;
        use nightsign::mirnet::ModelParams;

        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        fs::create_dir_all(root.join("images")).unwrap();
        for (k, id) in FIXTURE_IDS.iter().enumerate() {
            let img = Tensor::from_fn([1, 3, 8, 8], |_, c, y, x| ((k * 40 + c * 30 + y * 9 + x * 5) % 256) as f64 / 255.0);
            fs::write(root.join("images").join(format!("{id}.ppm")), encode_ppm(&img).unwrap()).unwrap();
            let (cx, cy, w, h) = fixture_box(k);
            write(&root.join("gt").join(format!("{id}.txt")), &format!("3 {cx} {cy} {w} {h}\n"));
        }
        let mut p = ModelParams::init(&NetConfig::test()).unwrap();
        p.zero_prefix("conv_out");
        p.save(root.join("zero.ckpt")).unwrap();
        Self { dir }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    /// Stub fixture echoing the ground truth of the listed images.
    pub fn echo_stub(&self, name: &str, images: &[usize], confs: &[f64]) -> PathBuf {
        let mut s = String::new();
        for (&k, &conf) in images.iter().zip(confs) {
            let (cx, cy, w, h) = fixture_box(k);
            s.push_str(&format!("{} 3 {conf} {cx} {cy} {w} {h}\n", FIXTURE_IDS[k]));
        }
        let p = self.path(name);
        write(&p, &s);
        p
    }

    pub fn config(&self, detector: nightsign::pipeline::DetectorMode, out: &str) -> nightsign::pipeline::PipelineConfig {
        nightsign::pipeline::PipelineConfig {
            images_dir: self.path("images"),
            ground_truth_dir: self.path("gt"),
            checkpoint: self.path("zero.ckpt"),
            detector,
            routing: nightsign::pipeline::Routing::All,
            iou_threshold: 0.5,
            conf_threshold: 0.25,
            output_dir: self.path(out),
            tile: None,
            labels: nightsign::dataset::LabelSpace::Fine,
            seed: 0,
        }
    }
}
