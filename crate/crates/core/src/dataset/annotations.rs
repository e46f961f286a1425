use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::classes::{group_class, LabelSpace};
use crate::error::{Error, Result};
use crate::eval::BBox;

pub const GTSRB_HEADER: &str = "Filename;Width;Height;Roi.X1;Roi.Y1;Roi.X2;Roi.Y2;ClassId";

/// Full-frame size of GTSDB images, which `gt.txt` does not record.
pub const GTSDB_IMAGE_SIZE: (u32, u32) = (1360, 800);

/// One labelled object; the box is in pixel corner form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub filename: String,
    pub image_w: u32,
    pub image_h: u32,
    pub bbox: BBox,
    pub class_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line number in the source text.
    pub line: usize,
    pub message: String,
}

/// Annotations that parsed, rows that did not, and how many boxes had to be
/// clamped into their image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub annotations: Vec<Annotation>,
    pub errors: Vec<RowError>,
    pub clamped: usize,
}

fn build(
    filename: &str,
    w: u32,
    h: u32,
    corners: [f64; 4],
    class: i64,
    clamped: &mut usize,
) -> std::result::Result<Annotation, String> {
    if w == 0 || h == 0 {
        return Err("zero image size".into());
    }
    group_class(class).map_err(|e| e.to_string())?;
    let [x1, y1, x2, y2] = corners;
    let c = [
        x1.clamp(0.0, w as f64),
        y1.clamp(0.0, h as f64),
        x2.clamp(0.0, w as f64),
        y2.clamp(0.0, h as f64),
    ];
    if c != corners {
        *clamped += 1;
    }
    let bbox = BBox::new(c[0], c[1], c[2], c[3]).map_err(|_| format!("empty box {corners:?}"))?;
    Ok(Annotation {
        filename: filename.to_string(),
        image_w: w,
        image_h: h,
        bbox,
        class_id: class as u32,
    })
}

fn num<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("bad {name} `{}`", s.trim()))
}

/// Parses a GTSRB per-track annotation CSV.
///
/// A missing or wrong header is a format error. Bad rows are collected in
/// [`ParseOutcome::errors`] and do not stop the rest of the file.
pub fn parse_gtsrb_csv(text: &str) -> Result<ParseOutcome> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").trim_start_matches('\u{feff}').trim();
    if header != GTSRB_HEADER {
        return Err(Error::Format {
            offset: 0,
            message: format!("expected header `{GTSRB_HEADER}`, found `{header}`"),
        });
    }
    let mut out = ParseOutcome::default();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let row = (|| {
            let f: Vec<&str> = line.trim().split(';').collect();
            if f.len() != 8 {
                return Err(format!("expected 8 fields, got {}", f.len()));
            }
            let w: u32 = num(f[1], "Width")?;
            let h: u32 = num(f[2], "Height")?;
            let corners = [
                num::<f64>(f[3], "Roi.X1")?,
                num(f[4], "Roi.Y1")?,
                num(f[5], "Roi.X2")?,
                num(f[6], "Roi.Y2")?,
            ];
            let class: i64 = num(f[7], "ClassId")?;
            build(f[0], w, h, corners, class, &mut out.clamped)
        })();
        match row {
            Ok(a) => out.annotations.push(a),
            Err(message) => out.errors.push(RowError { line: line_no, message }),
        }
    }
    Ok(out)
}

/// Parses GTSDB `gt.txt` (`filename;x1;y1;x2;y2;classId`, no header).
pub fn parse_gtsdb_gt(text: &str, image_size: (u32, u32)) -> ParseOutcome {
    let (w, h) = image_size;
    let mut out = ParseOutcome::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = (|| {
            let f: Vec<&str> = line.trim().split(';').collect();
            if f.len() != 6 {
                return Err(format!("expected 6 fields, got {}", f.len()));
            }
            let corners = [
                num::<f64>(f[1], "x1")?,
                num(f[2], "y1")?,
                num(f[3], "x2")?,
                num(f[4], "y2")?,
            ];
            let class: i64 = num(f[5], "classId")?;
            build(f[0], w, h, corners, class, &mut out.clamped)
        })();
        match row {
            Ok(a) => out.annotations.push(a),
            Err(message) => out.errors.push(RowError { line: i + 1, message }),
        }
    }
    out
}

/// `class cx cy w h`, normalized by the image size, six decimals.
pub fn to_yolo_line(a: &Annotation) -> Result<String> {
    to_yolo_line_as(a, a.class_id)
}

fn to_yolo_line_as(a: &Annotation, class_id: u32) -> Result<String> {
    if a.image_w == 0 || a.image_h == 0 {
        return Err(Error::Config(format!("`{}` has zero image size", a.filename)));
    }
    let (w, h) = (a.image_w as f64, a.image_h as f64);
    let (cx, cy) = a.bbox.center();
    Ok(format!(
        "{class_id} {:.6} {:.6} {:.6} {:.6}",
        cx / w,
        cy / h,
        a.bbox.width() / w,
        a.bbox.height() / h
    ))
}

/// Inverse of [`to_yolo_line`]: class id and pixel box.
pub fn parse_yolo_line(line: &str, image_w: u32, image_h: u32) -> Result<(u32, BBox)> {
    let g = crate::eval::io::parse_ground_truth_line("", line)?;
    Ok((g.class_id, g.bbox.scaled(image_w as f64, image_h as f64)))
}

/// Writes one `<stem>.txt` per image plus `classes.names` into `out_dir`.
/// Returns the label files written, sorted.
pub fn write_yolo_dataset(annotations: &[Annotation], out_dir: &Path, space: LabelSpace) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut per_image: BTreeMap<String, String> = BTreeMap::new();
    for a in annotations {
        let stem = Path::new(&a.filename)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| Error::Parse(format!("bad filename `{}`", a.filename)))?;
        let line = to_yolo_line_as(a, space.map(a.class_id)?)?;
        let body = per_image.entry(stem).or_default();
        let _ = writeln!(body, "{line}");
    }
    let mut written = Vec::new();
    for (stem, body) in per_image {
        let p = out_dir.join(format!("{stem}.txt"));
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    let names = out_dir.join("classes.names");
    fs::write(&names, space.names_file()).map_err(|e| Error::io(&names, e))?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gtsrb_row() {
        let text = format!("{GTSRB_HEADER}\n00000.ppm;29;30;5;6;24;25;0\n");
        let out = parse_gtsrb_csv(&text).unwrap();
        assert!(out.errors.is_empty());
        let a = &out.annotations[0];
        assert_eq!((a.image_w, a.image_h, a.class_id), (29, 30, 0));
        assert_eq!(a.bbox, BBox::new(5.0, 6.0, 24.0, 25.0).unwrap());
    }

    #[test]
    fn header_and_row_errors() {
        assert!(matches!(parse_gtsrb_csv("a;b\n1;2"), Err(Error::Format { offset: 0, .. })));
        assert!(parse_gtsrb_csv(GTSRB_HEADER).unwrap().annotations.is_empty());
        let text = format!("{GTSRB_HEADER}\n0.ppm;29;30;5;6;24;25\n1.ppm;29;30;5;6;24;25;1\n2.ppm;29;30;5;6;24;25;77\n");
        let out = parse_gtsrb_csv(&text).unwrap();
        assert_eq!(out.annotations.len(), 1);
        assert_eq!(out.errors.iter().map(|e| e.line).collect::<Vec<_>>(), [2, 4]);
    }

    #[test]
    fn clamps_out_of_bounds() {
        let out = parse_gtsdb_gt("00001.ppm;-3;10;1400;50;2\n", GTSDB_IMAGE_SIZE);
        assert_eq!(out.clamped, 1);
        assert_eq!(out.annotations[0].bbox, BBox::new(0.0, 10.0, 1360.0, 50.0).unwrap());
    }

    #[test]
    fn yolo_lines() {
        let a = Annotation {
            filename: "x.png".into(),
            image_w: 100,
            image_h: 100,
            bbox: BBox::new(10.0, 20.0, 30.0, 60.0).unwrap(),
            class_id: 2,
        };
        assert_eq!(to_yolo_line(&a).unwrap(), "2 0.200000 0.400000 0.200000 0.400000");
        let full = Annotation {
            bbox: BBox::new(0.0, 0.0, 100.0, 100.0).unwrap(),
            ..a.clone()
        };
        assert_eq!(to_yolo_line(&full).unwrap(), "2 0.500000 0.500000 1.000000 1.000000");
        let zero = Annotation { image_w: 0, ..a };
        assert!(to_yolo_line(&zero).is_err());
    }
}
