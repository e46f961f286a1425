use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Thresholds for the automatic low-quality selector. An image is selected
/// when it is darker than `luminance` or its Laplacian variance (8-bit grey
/// scale) is below `blur`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityThresholds {
    pub luminance: f64,
    pub blur: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            luminance: 0.25,
            blur: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub id: String,
    pub luminance: f64,
    pub laplacian_var: f64,
    pub selected: bool,
}

/// Rec. 601 weights as integers over 1000, so white maps to exactly 1.0.
fn grey(t: &Tensor, y: usize, x: usize) -> f64 {
    (299.0 * t.at(0, 0, y, x) + 587.0 * t.at(0, 1, y, x) + 114.0 * t.at(0, 2, y, x)) / 1000.0
}

/// Mean Rec. 601 luma of a `[1, 3, h, w]` image in `[0, 1]`.
pub fn mean_luminance(t: &Tensor) -> f64 {
    let (h, w) = (t.height(), t.width());
    let mut s = 0.0;
    for y in 0..h {
        for x in 0..w {
            s += grey(t, y, x);
        }
    }
    s / (h * w) as f64
}

/// Population variance of the 4-neighbour Laplacian of the grey image scaled
/// to `[0, 255]`, over interior pixels. Images smaller than 3x3 score 0.
pub fn laplacian_variance(t: &Tensor) -> f64 {
    let (h, w) = (t.height(), t.width());
    if h < 3 || w < 3 {
        return 0.0;
    }
    let g = |y: usize, x: usize| 255.0 * grey(t, y, x);
    let mut vals = Vec::with_capacity((h - 2) * (w - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            vals.push(g(y - 1, x) + g(y + 1, x) + g(y, x - 1) + g(y, x + 1) - 4.0 * g(y, x));
        }
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub fn score_image(id: &str, t: &Tensor, th: &QualityThresholds) -> QualityScore {
    let luminance = mean_luminance(t);
    let laplacian_var = laplacian_variance(t);
    QualityScore {
        id: id.to_string(),
        luminance,
        laplacian_var,
        selected: luminance < th.luminance || laplacian_var < th.blur,
    }
}

/// Scores every image, in input order. Use [`QualityScore::selected`] to
/// pick the subset.
pub fn select_low_quality<'a, I>(images: I, th: &QualityThresholds) -> Result<Vec<QualityScore>>
where
    I: IntoIterator<Item = (&'a str, &'a Tensor)>,
{
    if !(th.luminance > 0.0 && th.blur > 0.0) {
        return Err(Error::Config(format!("quality thresholds must be positive, got {th:?}")));
    }
    images
        .into_iter()
        .map(|(id, t)| {
            if t.batch() != 1 || t.channels() != 3 {
                return Err(Error::Config(format!("`{id}`: expected [1, 3, h, w], got {:?}", t.dims())));
            }
            Ok(score_image(id, t, th))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_and_grey_are_selected() {
        let black = Tensor::zeros([1, 3, 8, 8]);
        let grey = Tensor::full([1, 3, 8, 8], 0.5);
        let th = QualityThresholds { luminance: 1e-6, blur: 50.0 };
        let s = select_low_quality([("b", &black), ("g", &grey)], &th).unwrap();
        assert!(s[0].selected);
        assert!(s[1].selected);
        assert_eq!(s[1].laplacian_var, 0.0);
    }

    #[test]
    fn checkerboard_is_kept() {
        let cb = Tensor::from_fn([1, 3, 8, 8], |_, _, y, x| ((y + x) % 2) as f64);
        let s = select_low_quality([("c", &cb)], &QualityThresholds::default()).unwrap();
        assert!((s[0].luminance - 0.5).abs() < 1e-12);
        // every interior Laplacian is +-1020, so the variance is 1020^2
        assert!((s[0].laplacian_var - 1020.0 * 1020.0).abs() < 1e-6);
        assert!(!s[0].selected);
    }

    #[test]
    fn rejects_nonpositive_thresholds() {
        let t = Tensor::zeros([1, 3, 4, 4]);
        let th = QualityThresholds { luminance: 0.0, blur: 1.0 };
        assert!(select_low_quality([("x", &t)], &th).is_err());
    }
}
