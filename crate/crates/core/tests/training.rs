use nightsign::mirnet::NetConfig;
use nightsign::train::{random_crop_pair, synthetic_dark_pairs, train, ImagePair, TrainConfig, CURVE_HEADER};
use nightsign::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn crop_offsets_are_uniform() {
    // 600 wide, 400 high; each crop's offset is read back from a coordinate ramp
    let (h, w, size) = (400usize, 600usize, 128usize);
    let low = Tensor::from_fn([1, 3, h, w], |_, c, y, x| match c {
        0 => y as f64 / h as f64,
        1 => x as f64 / w as f64,
        _ => 0.0,
    });
    let pair = ImagePair::new("ramp", low.clone(), low).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let n = 10_000usize;
    let bins = 8usize;
    let mut top_hist = vec![0usize; bins];
    let mut left_hist = vec![0usize; bins];
    let (ny, nx) = (h - size + 1, w - size + 1);
    for _ in 0..n {
        let c = random_crop_pair(&pair, size, &mut rng).unwrap();
        let top = (c.low.at(0, 0, 0, 0) * h as f64).round() as usize;
        let left = (c.low.at(0, 1, 0, 0) * w as f64).round() as usize;
        assert_eq!(c.low, c.high);
        top_hist[top * bins / ny] += 1;
        left_hist[left * bins / nx] += 1;
    }
    for (hist, span) in [(&top_hist, ny), (&left_hist, nx)] {
        for (b, &count) in hist.iter().enumerate() {
            // offsets per bin under the uniform law
            let lo = (b * span).div_ceil(bins);
            let hi = ((b + 1) * span).div_ceil(bins);
            let p = (hi - lo) as f64 / span as f64;
            let mean = n as f64 * p;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((count as f64 - mean).abs() <= 3.0 * sd, "bin {b}: {count} vs {mean:.1} +- {sd:.1}");
        }
    }
}

#[test]
fn short_run_is_reproducible_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = synthetic_dark_pairs(3, 12, 12, 5);
    let val = synthetic_dark_pairs(1, 10, 10, 6);
    let net = NetConfig::test().with_seed(9);
    let cfg = TrainConfig {
        epochs: 2,
        crop: 8,
        batch: 2,
        lr: 1e-3,
        seed: 4,
        curve_output: Some(dir.path().join("curve.csv")),
        checkpoint_dir: Some(dir.path().join("ckpt")),
        ..TrainConfig::default()
    };
    let (p1, log1) = train(&pairs, &val, &net, &cfg).unwrap();
    let (p2, log2) = train(&pairs, &val, &net, &cfg).unwrap();
    assert_eq!(log1, log2);
    assert_eq!(p1.to_bytes(), p2.to_bytes());
    let csv = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CURVE_HEADER));
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(std::fs::read(dir.path().join("ckpt/last.ckpt")).unwrap(), p2.to_bytes());
    assert!(log1.rows.iter().all(|r| r.val_psnr_db.is_finite()));
}
