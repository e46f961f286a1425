use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Aligned low/high quality views of one scene, both `[1, 3, h, w]` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub low: Tensor,
    pub high: Tensor,
    pub id: String,
}

impl ImagePair {
    pub fn new(id: impl Into<String>, low: Tensor, high: Tensor) -> Result<Self> {
        if low.dims() != high.dims() {
            return Err(Error::Shape {
                op: "image pair",
                lhs: low.dims(),
                rhs: high.dims(),
            });
        }
        if low.batch() != 1 || low.channels() != 3 {
            return Err(Error::Config(format!(
                "image pairs must be [1, 3, h, w], got {:?}",
                low.dims()
            )));
        }
        let in_range = |t: &Tensor| t.data().iter().all(|v| (0.0..=1.0).contains(v));
        if !in_range(&low) || !in_range(&high) {
            return Err(Error::Config("image pair values must lie in [0, 1]".into()));
        }
        Ok(Self {
            low,
            high,
            id: id.into(),
        })
    }

    pub fn height(&self) -> usize {
        self.low.height()
    }

    pub fn width(&self) -> usize {
        self.low.width()
    }
}

/// Crops both images of the pair at the same uniformly drawn offset.
pub fn random_crop_pair<R: Rng>(pair: &ImagePair, size: usize, rng: &mut R) -> Result<ImagePair> {
    let (h, w) = (pair.height(), pair.width());
    if size == 0 || size > h || size > w {
        return Err(Error::Config(format!(
            "crop size {size} does not fit pair `{}` of {h}x{w}",
            pair.id
        )));
    }
    let top = rng.gen_range(0..=h - size);
    let left = rng.gen_range(0..=w - size);
    Ok(ImagePair {
        low: pair.low.crop(top, left, size, size)?,
        high: pair.high.crop(top, left, size, size)?,
        id: pair.id.clone(),
    })
}

/// Amount of padding added on each side by [`reflect_pad_to_multiple`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn is_zero(&self) -> bool {
        *self == Padding::default()
    }
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Reflect-pads height and width up to the next multiple of `multiple`,
/// splitting the padding evenly (extra pixel at the bottom/right).
pub fn reflect_pad_to_multiple(x: &Tensor, multiple: usize) -> (Tensor, Padding) {
    let [n, c, h, w] = x.dims();
    let ph = (multiple - h % multiple) % multiple;
    let pw = (multiple - w % multiple) % multiple;
    let pad = Padding {
        top: ph / 2,
        bottom: ph - ph / 2,
        left: pw / 2,
        right: pw - pw / 2,
    };
    if pad.is_zero() {
        return (x.clone(), pad);
    }
    let out = Tensor::from_fn([n, c, h + ph, w + pw], |i, j, y, xx| {
        let sy = reflect(y as isize - pad.top as isize, h);
        let sx = reflect(xx as isize - pad.left as isize, w);
        x.at(i, j, sy, sx)
    });
    (out, pad)
}

/// Inverse of [`reflect_pad_to_multiple`].
pub fn unpad(x: &Tensor, pad: Padding) -> Result<Tensor> {
    if pad.is_zero() {
        return Ok(x.clone());
    }
    let [_, _, h, w] = x.dims();
    x.crop(
        pad.top,
        pad.left,
        h - pad.top - pad.bottom,
        w - pad.left - pad.right,
    )
}

/// Smooth synthetic scenes and darkened, slightly noisy counterparts.
///
/// The "high" image is a sum of a few random colour gradients and blobs; the
/// "low" image scales it by a per-pair exposure in `[0.25, 0.45]`, adds
/// small uniform noise and clips to `[0, 1]`.
pub fn synthetic_dark_pairs(count: usize, height: usize, width: usize, seed: u64) -> Vec<ImagePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.25..0.65));
            let grad: [(f64, f64); 3] =
                std::array::from_fn(|_| (rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)));
            let (cy, cx) = (rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8));
            let radius = rng.gen_range(0.15..0.35);
            let blob: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.25..0.3));
            let high = Tensor::from_fn([1, 3, height, width], |_, c, y, x| {
                let fy = y as f64 / height.max(2).saturating_sub(1) as f64;
                let fx = x as f64 / width.max(2).saturating_sub(1) as f64;
                let d2 = ((fy - cy).powi(2) + (fx - cx).powi(2)) / (radius * radius);
                let v = base[c] + grad[c].0 * (fy - 0.5) + grad[c].1 * (fx - 0.5)
                    + blob[c] * (-d2).exp();
                v.clamp(0.0, 1.0)
            });
            let exposure = rng.gen_range(0.25..0.45);
            let low = high.map(|v| v * exposure);
            let low = Tensor::from_fn(low.dims(), |n, c, y, x| {
                (low.at(n, c, y, x) + rng.gen_range(-0.01..0.01)).clamp(0.0, 1.0)
            });
            ImagePair {
                low,
                high,
                id: format!("synthetic_{k:04}"),
            }
        })
        .collect()
}
