use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nightsign::dataset::encode_ppm;
use nightsign::mirnet::{ModelParams, NetConfig};
use nightsign::Tensor;

fn nightsign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nightsign")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(path: &Path, text: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

/// Three 8x8 images with one class-5 sign each, ground truth and a
/// zero-residual test checkpoint.
fn scene(root: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let images = root.join("images");
    let gt = root.join("gt");
    fs::create_dir_all(&images).unwrap();
    for k in 0..3 {
        let t = Tensor::from_fn([1, 3, 8, 8], |_, c, y, x| ((k * 70 + c * 20 + y * 11 + x * 3) % 256) as f64 / 255.0);
        fs::write(images.join(format!("f{k}.ppm")), encode_ppm(&t).unwrap()).unwrap();
        write(&gt.join(format!("f{k}.txt")), "5 0.5 0.5 0.25 0.25\n");
    }
    let mut p = ModelParams::init(&NetConfig::test()).unwrap();
    p.zero_prefix("conv_out");
    let ckpt = root.join("zero.ckpt");
    p.save(&ckpt).unwrap();
    (images, gt, ckpt)
}

#[test]
fn convert_writes_labels_and_flags_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.txt");
    write(&gt, "00000.ppm;10;20;50;60;1\n00000.ppm;100;100;150;160;14\n00001.ppm;5;5;30;30;33\n");
    let out = dir.path().join("labels");
    let o = nightsign(&["convert", "--format", "gtsdb", "--input", s(&gt), "--output", s(&out), "--labels", "broad"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("00000.txt")).unwrap().lines().count(), 2);
    assert!(fs::read_to_string(out.join("00001.txt")).unwrap().starts_with("1 "));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("conversion.json")).unwrap()).unwrap();
    assert_eq!(report["annotations"], 3);

    write(&gt, "00000.ppm;10;20;50;60;1\n00000.ppm;1;1;9;9;99\n");
    let o = nightsign(&["convert", "--format", "gtsdb", "--input", s(&gt), "--output", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gtsrb_directory_prefixes_class_folders() {
    let dir = tempfile::tempdir().unwrap();
    let header = "Filename;Width;Height;Roi.X1;Roi.Y1;Roi.X2;Roi.Y2;ClassId\n";
    write(&dir.path().join("in/00001/GT-00001.csv"), &format!("{header}00000_00000.ppm;30;30;5;5;25;25;1\n"));
    write(&dir.path().join("in/00002/GT-00002.csv"), &format!("{header}00000_00000.ppm;30;30;5;5;25;25;2\n"));
    let out = dir.path().join("out");
    let o = nightsign(&["convert", "--format", "gtsrb", "--input", s(&dir.path().join("in")), "--output", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(out.join("00001_00000_00000.txt")).unwrap().starts_with("1 "));
    assert!(fs::read_to_string(out.join("00002_00000_00000.txt")).unwrap().starts_with("2 "));
}

#[test]
fn eval_detect_reports_and_flags_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let (_, gt, _) = scene(dir.path());
    let dets = dir.path().join("dets");
    write(&dets.join("f0.txt"), "5 0.9 0.5 0.5 0.25 0.25\n");
    write(&dets.join("f1.txt"), "5 0.8 0.5 0.5 0.25 0.25\n");
    let out = dir.path().join("eval");
    let o = nightsign(&["eval-detect", "--ground-truth", s(&gt), "--detections", s(&dets), "--output", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("f2"));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("eval.json")).unwrap()).unwrap();
    let ap = report["report"]["per_class"]["5"]["ap"].as_f64().unwrap();
    assert!((ap - 2.0 / 3.0).abs() < 1e-12);
    assert!(fs::read_to_string(out.join("eval.csv")).unwrap().starts_with("class,ap,"));

    write(&dets.join("f2.txt"), "");
    let o = nightsign(&["eval-detect", "--ground-truth", s(&gt), "--detections", s(&dets)]);
    assert_eq!(code(&o), 0);
}

#[test]
fn grad_check_subset_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = nightsign(&[
        "grad-check", "--target", "relu", "--target", "ca", "--seeds", "2", "--seed", "5", "--output", s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("gradcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.contains("relu,6,"));
    let o = nightsign(&["grad-check", "--target", "relu", "--seeds", "1", "--tolerance", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_respects_config_flags_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        "seed = 3\n[train]\npreset = \"test\"\nsynthetic = 2\nsynthetic_size = 12\nepochs = 3\ncrop = 8\nbatch = 2\nlr = 0.001\n",
    );
    let run = |out: &str| {
        let out = dir.path().join(out);
        let o = nightsign(&["train", "--config", s(&cfg), "--epochs", "2", "--output", s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(fs::read(a.join("model.ckpt")).unwrap(), fs::read(b.join("model.ckpt")).unwrap());
    assert_eq!(fs::read(a.join("curve.csv")).unwrap(), fs::read(b.join("curve.csv")).unwrap());
    assert_eq!(fs::read_to_string(a.join("curve.csv")).unwrap().lines().count(), 3);
    let p = ModelParams::load(a.join("model.ckpt")).unwrap();
    assert_eq!(p.config().seed, 3);
    assert_eq!(p.config().base_channels, 8);

    let c = dir.path().join("c");
    let o = nightsign(&["train", "--config", s(&cfg), "--epochs", "2", "--seed", "4", "--output", s(&c)]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(a.join("model.ckpt")).unwrap(), fs::read(c.join("model.ckpt")).unwrap());
}

#[test]
fn enhance_with_zero_residual_reproduces_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (images, _, ckpt) = scene(dir.path());
    let out = dir.path().join("enh");
    let o = nightsign(&["enhance", "--checkpoint", s(&ckpt), "--input", s(&images), "--output", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for k in 0..3 {
        let name = format!("f{k}.ppm");
        assert_eq!(fs::read(images.join(&name)).unwrap(), fs::read(out.join(&name)).unwrap());
    }
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn pipeline_from_config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let (images, gt, ckpt) = scene(dir.path());
    let stub = dir.path().join("stub.txt");
    write(&stub, "f0 5 0.9 0.5 0.5 0.25 0.25\nf1 5 0.8 0.5 0.5 0.25 0.25\n");
    let stub2 = dir.path().join("stub2.txt");
    write(&stub2, "f0 5 0.9 0.5 0.5 0.25 0.25\nf1 5 0.8 0.5 0.5 0.25 0.25\nf2 5 0.7 0.5 0.5 0.25 0.25\n");
    let cfg = dir.path().join("p.toml");
    write(
        &cfg,
        &format!(
            "[pipeline]\nimages_dir = {:?}\nground_truth_dir = {:?}\ncheckpoint = {:?}\noutput_dir = {:?}\n\
             [pipeline.detector]\nmode = \"stub\"\nraw = {:?}\n",
            s(&images),
            s(&gt),
            s(&ckpt),
            s(&dir.path().join("out")),
            s(&stub)
        ),
    );
    let o = nightsign(&["pipeline", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(r["comparison"]["delta_map"], 0.0);

    let out2 = dir.path().join("out2");
    let o = nightsign(&[
        "pipeline", "--config", s(&cfg), "--stub", s(&stub), "--stub-enhanced", s(&stub2), "--output", s(&out2),
        "--seed", "11",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(out2.join("report.json")).unwrap()).unwrap();
    let d = r["comparison"]["delta_map"].as_f64().unwrap();
    assert!((d - 1.0 / 3.0).abs() < 1e-12, "{d}");
    assert_eq!(r["seed"], 11);
    assert!(out2.join("report.csv").is_file());
    assert!(stdout(&o).contains("== difference =="));
}

#[test]
fn pipeline_missing_detections_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (images, gt, ckpt) = scene(dir.path());
    let raw = dir.path().join("raw");
    let enh = dir.path().join("enh");
    for k in 0..2 {
        write(&raw.join(format!("f{k}.txt")), "5 0.9 0.5 0.5 0.25 0.25\n");
    }
    for k in 0..3 {
        write(&enh.join(format!("f{k}.txt")), "5 0.9 0.5 0.5 0.25 0.25\n");
    }
    let o = nightsign(&[
        "pipeline", "--images", s(&images), "--ground-truth", s(&gt), "--checkpoint", s(&ckpt),
        "--output", s(&dir.path().join("out")), "--precomputed-raw", s(&raw), "--precomputed-enhanced", s(&enh),
        "--select", "--luminance", "0.9",
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("f2"));
}

#[test]
fn errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&nightsign(&["convert", "--format", "nope"])), 1);
    assert_eq!(code(&nightsign(&["eval-detect", "--config", s(&dir.path().join("missing.toml"))])), 1);
    // no detector configured
    let (images, gt, ckpt) = scene(dir.path());
    let o = nightsign(&[
        "pipeline", "--images", s(&images), "--ground-truth", s(&gt), "--checkpoint", s(&ckpt),
        "--output", s(&dir.path().join("out")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("detector"));
    assert_eq!(code(&nightsign(&["--help"])), 0);
}
