mod common;

use std::collections::BTreeMap;

use common::fixture;
use nightsign::dataset::{
    decode_ppm, encode_ppm, group_class, mean_luminance, parse_gtsdb_gt, parse_gtsrb_csv, parse_yolo_line,
    select_low_quality, to_yolo_line, write_yolo_dataset, Annotation, BroadCategory, LabelSpace, QualityThresholds,
    GTSDB_IMAGE_SIZE,
};
use nightsign::eval::BBox;
use nightsign::Tensor;
use proptest::prelude::*;

fn assert_round_trip(anns: &[Annotation]) {
    for a in anns {
        let line = to_yolo_line(a).unwrap();
        let (class, b) = parse_yolo_line(&line, a.image_w, a.image_h).unwrap();
        assert_eq!(class, a.class_id);
        for (x, y) in [
            (b.x_min, a.bbox.x_min),
            (b.y_min, a.bbox.y_min),
            (b.x_max, a.bbox.x_max),
            (b.y_max, a.bbox.y_max),
        ] {
            assert!((x - y).abs() <= 0.5, "{line}: {b:?} vs {:?}", a.bbox);
        }
    }
}

#[test]
fn gtsrb_fixtures_round_trip() {
    for name in ["gtsrb_GT-00014.csv", "gtsrb_mixed.csv"] {
        let text = std::fs::read_to_string(fixture(name)).unwrap();
        let out = parse_gtsrb_csv(&text).unwrap();
        assert!(out.errors.is_empty(), "{:?}", out.errors);
        assert_eq!(out.clamped, 0);
        assert_eq!(out.annotations.len(), text.lines().count() - 1);
        assert_round_trip(&out.annotations);
    }
}

#[test]
fn gtsdb_fixture_round_trips_and_clamps() {
    let text = std::fs::read_to_string(fixture("gtsdb_gt.txt")).unwrap();
    let out = parse_gtsdb_gt(&text, GTSDB_IMAGE_SIZE);
    assert!(out.errors.is_empty());
    assert_eq!(out.annotations.len(), 12);
    assert_eq!(out.clamped, 1);
    assert!(out.annotations.iter().all(|a| a.bbox.x_max <= 1360.0));
    assert_round_trip(&out.annotations);
}

#[test]
fn writes_one_label_file_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("gtsdb_gt.txt")).unwrap();
    let anns = parse_gtsdb_gt(&text, GTSDB_IMAGE_SIZE).annotations;
    let files = write_yolo_dataset(&anns, dir.path(), LabelSpace::Broad).unwrap();
    assert_eq!(files.len(), 8);
    let body = std::fs::read_to_string(dir.path().join("00001.txt")).unwrap();
    let classes: Vec<&str> = body.lines().map(|l| l.split(' ').next().unwrap()).collect();
    // 40 and 38 are mandatory, 13 is other
    assert_eq!(classes, ["1", "1", "3"]);
    let names = std::fs::read_to_string(dir.path().join("classes.names")).unwrap();
    assert_eq!(names, "Prohibitory\nMandatory\nDanger\nOther\n");
}

#[test]
fn broad_categories_partition_all_classes() {
    let mut sizes: BTreeMap<BroadCategory, usize> = BTreeMap::new();
    for c in 0..=42 {
        *sizes.entry(group_class(c).unwrap()).or_default() += 1;
    }
    assert_eq!(sizes[&BroadCategory::Prohibitory], 12);
    assert_eq!(sizes[&BroadCategory::Danger], 15);
    assert_eq!(sizes[&BroadCategory::Mandatory], 8);
    assert_eq!(sizes[&BroadCategory::Other], 8);
    assert_eq!(sizes.values().sum::<usize>(), 43);
    assert!(group_class(43).is_err() && group_class(-1).is_err());
}

#[test]
fn ppm_white_and_selector_examples() {
    let white = decode_ppm(&encode_ppm(&Tensor::full([1, 3, 3, 3], 1.0)).unwrap()).unwrap();
    assert_eq!(mean_luminance(&white), 1.0);
    let black = Tensor::zeros([1, 3, 5, 5]);
    let th = QualityThresholds { luminance: 1e-9, blur: 1e-9 };
    assert!(select_low_quality([("black", &black)], &th).unwrap()[0].selected);
    let a = select_low_quality([("w", &white), ("b", &black)], &QualityThresholds::default()).unwrap();
    let b = select_low_quality([("w", &white), ("b", &black)], &QualityThresholds::default()).unwrap();
    assert_eq!(a, b);
}

fn ppm_bytes() -> impl Strategy<Value = Vec<u8>> {
    (1usize..7, 1usize..7).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h * 3).prop_map(move |raster| {
            let mut v = format!("P6\n{w} {h}\n255\n").into_bytes();
            v.extend(raster);
            v
        })
    })
}

proptest! {
    #[test]
    fn ppm_round_trip_is_byte_exact(bytes in ppm_bytes()) {
        let t = decode_ppm(&bytes).unwrap();
        prop_assert_eq!(encode_ppm(&t).unwrap(), bytes);
    }

    #[test]
    fn yolo_round_trip_within_half_pixel(
        w in 1u32..2000, h in 1u32..2000,
        fx in 0.0..1.0f64, fy in 0.0..1.0f64, fw in 0.01..1.0f64, fh in 0.01..1.0f64,
        class in 0u32..43,
    ) {
        let x0 = fx * w as f64 * (1.0 - fw);
        let y0 = fy * h as f64 * (1.0 - fh);
        let a = Annotation {
            filename: "x.ppm".into(),
            image_w: w,
            image_h: h,
            bbox: BBox::new(x0, y0, x0 + fw * w as f64, y0 + fh * h as f64).unwrap(),
            class_id: class,
        };
        let (c, b) = parse_yolo_line(&to_yolo_line(&a).unwrap(), w, h).unwrap();
        prop_assert_eq!(c, class);
        prop_assert!((b.x_min - a.bbox.x_min).abs() <= 0.5);
        prop_assert!((b.y_max - a.bbox.y_max).abs() <= 0.5);
    }
}
