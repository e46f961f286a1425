use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor;

/// Mean of `sqrt((pred - target)^2 + eps^2)` over all elements.
pub fn charbonnier_loss(pred: &Tensor, target: &Tensor, eps: f64) -> Result<f64> {
    ops::charbonnier(pred, target, eps)
}

pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.dims() != target.dims() {
        return Err(Error::Shape {
            op: "mse",
            lhs: pred.dims(),
            rhs: target.dims(),
        });
    }
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(total / pred.len() as f64)
}

/// PSNR in dB for a given mean squared error; `+inf` when `mse == 0`.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// `10 log10(peak^2 / MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(pred: &Tensor, target: &Tensor, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(pred, target)?, peak))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_identical_is_infinite() {
        let a = Tensor::full([1, 3, 4, 4], 0.3);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_uniform_difference() {
        let a = Tensor::full([1, 3, 4, 4], 0.5);
        let b = Tensor::full([1, 3, 4, 4], 0.6);
        let p = psnr(&a, &b, 1.0).unwrap();
        assert!((p - 20.0).abs() < 1e-9, "{p}");
        let c = Tensor::full([1, 3, 4, 4], 0.55);
        let gain = psnr(&a, &c, 1.0).unwrap() - p;
        assert!((gain - 20.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn charbonnier_floor_and_limit() {
        let a = Tensor::from_fn([1, 3, 4, 4], |_, c, h, w| 0.1 * (c + h) as f64 - 0.05 * w as f64);
        let b = Tensor::full([1, 3, 4, 4], 0.2);
        let eps = 1e-3;
        assert!((charbonnier_loss(&b, &b, eps).unwrap() - eps).abs() < 1e-18);
        let l = charbonnier_loss(&a, &b, eps).unwrap();
        assert!(l >= eps);
        let l1: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>()
            / a.len() as f64;
        let tiny = charbonnier_loss(&a, &b, 1e-8).unwrap();
        assert!((tiny - l1).abs() < 1e-8, "{tiny} vs {l1}");
    }

    #[test]
    fn shape_mismatch_errors() {
        let a = Tensor::zeros([1, 3, 4, 4]);
        let b = Tensor::zeros([1, 3, 4, 2]);
        assert!(charbonnier_loss(&a, &b, 1e-3).is_err());
        assert!(psnr(&a, &b, 1.0).is_err());
    }
}
