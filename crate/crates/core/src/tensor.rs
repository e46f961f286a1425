//! Dense 4-D tensors in `(batch, channel, height, width)` layout.

use std::fmt;

use crate::error::{Error, Result};

/// `[n, c, h, w]`.
pub type Dims = [usize; 4];

/// Row-major NCHW tensor of `f64`.
///
/// Tensors are treated as immutable values once an operation has produced
/// them; kernels allocate fresh outputs.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    dims: Dims,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        let expected = numel(dims);
        if data.len() != expected {
            return Err(Error::InvalidTensor(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self::full(dims, 0.0)
    }

    pub fn full(dims: Dims, value: f64) -> Self {
        Self {
            dims,
            data: vec![value; numel(dims)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            dims: [1, 1, 1, 1],
            data: vec![value],
        }
    }

    /// Builds a tensor by evaluating `f(n, c, h, w)` at every index.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let [n, c, h, w] = dims;
        let mut data = Vec::with_capacity(numel(dims));
        for i in 0..n {
            for j in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(i, j, y, x));
                    }
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let [_, cc, hh, ww] = self.dims;
        ((n * cc + c) * hh + h) * ww + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: f64) {
        let i = self.offset(n, c, h, w);
        self.data[i] = value;
    }

    /// Value of a `[1, 1, 1, 1]` tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Copies out sample `n` as a `[1, c, h, w]` tensor.
    pub fn sample(&self, n: usize) -> Tensor {
        let [_, c, h, w] = self.dims;
        let plane = c * h * w;
        Tensor {
            dims: [1, c, h, w],
            data: self.data[n * plane..(n + 1) * plane].to_vec(),
        }
    }

    /// Stacks `[1, c, h, w]` tensors of identical dims along the batch axis.
    pub fn stack(samples: &[Tensor]) -> Result<Tensor> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidTensor("cannot stack zero tensors".into()))?;
        let [_, c, h, w] = first.dims;
        let mut data = Vec::with_capacity(samples.len() * c * h * w);
        for s in samples {
            if s.dims != [1, c, h, w] {
                return Err(Error::Shape {
                    op: "stack",
                    lhs: first.dims,
                    rhs: s.dims,
                });
            }
            data.extend_from_slice(&s.data);
        }
        Tensor::new([samples.len(), c, h, w], data)
    }

    /// Spatial window `[top, top+height) x [left, left+width)` of every plane.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.dims;
        if top + height > h || left + width > w {
            return Err(Error::Config(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {h}x{w}"
            )));
        }
        Ok(Tensor::from_fn([n, c, height, width], |i, j, y, x| {
            self.at(i, j, top + y, left + x)
        }))
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{:?} [", self.dims)?;
        for (i, v) in self.data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}

pub fn numel(dims: Dims) -> usize {
    dims.iter().product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_length() {
        assert!(Tensor::new([1, 2, 2, 2], vec![0.0; 7]).is_err());
        assert!(Tensor::new([1, 2, 2, 2], vec![0.0; 8]).is_ok());
    }

    #[test]
    fn offsets_are_row_major() {
        let t = Tensor::from_fn([2, 3, 4, 5], |n, c, h, w| (n * 1000 + c * 100 + h * 10 + w) as f64);
        assert_eq!(t.at(1, 2, 3, 4), 1234.0);
        assert_eq!(t.data()[t.offset(1, 0, 2, 1)], 1021.0);
    }

    #[test]
    fn stack_and_sample_invert() {
        let a = Tensor::full([1, 2, 3, 3], 1.0);
        let b = Tensor::full([1, 2, 3, 3], 2.0);
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.dims(), [2, 2, 3, 3]);
        assert_eq!(s.sample(0), a);
        assert_eq!(s.sample(1), b);
        assert!(Tensor::stack(&[a, Tensor::zeros([1, 1, 3, 3])]).is_err());
    }

    #[test]
    fn crop_bounds() {
        let t = Tensor::from_fn([1, 1, 4, 4], |_, _, h, w| (h * 4 + w) as f64);
        let c = t.crop(1, 2, 2, 2).unwrap();
        assert_eq!(c.data(), &[6.0, 7.0, 10.0, 11.0]);
        assert!(t.crop(3, 0, 2, 2).is_err());
    }
}
