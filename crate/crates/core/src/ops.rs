//! Forward and backward kernels for every primitive the network uses.
//!
//! Each forward kernel is a plain function over [`Tensor`]s; the matching
//! `*_backward` maps an upstream gradient onto the inputs. Kernels with a
//! non-smooth point also report a `margin`: the smallest distance between an
//! input and the nearest switching point (relu at zero, median/max order
//! changes, clamp bounds). Gradient checks use it to reject samples that sit
//! too close to a kink.

use crate::error::{Error, Result};
use crate::tensor::{Dims, Tensor};

// ---------------------------------------------------------------------------
// convolution

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn same(kernel: usize) -> Self {
        Self {
            stride: 1,
            padding: (kernel - 1) / 2,
        }
    }
}

fn conv_out_dims(x: Dims, w: Dims, geo: ConvGeometry) -> Result<Dims> {
    let [n, c, h, wd] = x;
    let [oc, ic, kh, kw] = w;
    if c != ic {
        return Err(Error::Shape {
            op: "conv2d",
            lhs: x,
            rhs: w,
        });
    }
    if geo.stride == 0 {
        return Err(Error::Config("conv2d stride must be >= 1".into()));
    }
    let ph = h + 2 * geo.padding;
    let pw = wd + 2 * geo.padding;
    if kh == 0 || kw == 0 || ph < kh || pw < kw {
        return Err(Error::Shape {
            op: "conv2d",
            lhs: x,
            rhs: w,
        });
    }
    Ok([n, oc, (ph - kh) / geo.stride + 1, (pw - kw) / geo.stride + 1])
}

/// Output indices `o` in `[lo, hi)` whose input tap `o*s + k - p` lands in `[0, len)`.
#[inline]
fn tap_range(k: usize, geo: ConvGeometry, len: usize, out_len: usize) -> (usize, usize) {
    let s = geo.stride as isize;
    let off = k as isize - geo.padding as isize;
    // smallest o with o*s + off >= 0
    let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
    // largest o with o*s + off <= len - 1
    let last = len as isize - 1 - off;
    let hi = if last < 0 { 0 } else { last / s + 1 };
    let lo = lo.clamp(0, out_len as isize) as usize;
    let hi = hi.clamp(0, out_len as isize) as usize;
    (lo, hi.max(lo))
}

fn check_bias(b: &Tensor, oc: usize, w: &Tensor) -> Result<()> {
    if b.dims() != [1, oc, 1, 1] {
        return Err(Error::Shape {
            op: "conv2d bias",
            lhs: w.dims(),
            rhs: b.dims(),
        });
    }
    Ok(())
}

/// 2-D cross-correlation with zero padding. `w` is `[out_c, in_c, kh, kw]`,
/// `b` is `[1, out_c, 1, 1]`.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor, geo: ConvGeometry) -> Result<Tensor> {
    let out_dims = conv_out_dims(x.dims(), w.dims(), geo)?;
    let [n, ic, h, wd] = x.dims();
    let [_, oc, oh, ow] = out_dims;
    let [_, _, kh, kw] = w.dims();
    check_bias(b, oc, w)?;

    let mut out = Tensor::zeros(out_dims);
    let xs = x.data();
    let ws = w.data();
    let s = geo.stride;
    let p = geo.padding;
    let out_plane = oh * ow;
    let in_plane = h * wd;
    let od = out.data_mut();
    for bi in 0..n {
        for o in 0..oc {
            let obase = (bi * oc + o) * out_plane;
            let plane = &mut od[obase..obase + out_plane];
            plane.fill(b.data()[o]);
            for i in 0..ic {
                let ibase = (bi * ic + i) * in_plane;
                let input = &xs[ibase..ibase + in_plane];
                for ky in 0..kh {
                    let (y0, y1) = tap_range(ky, geo, h, oh);
                    for kx in 0..kw {
                        let wv = ws[((o * ic + i) * kh + ky) * kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (x0, x1) = tap_range(kx, geo, wd, ow);
                        if x0 == x1 {
                            continue;
                        }
                        for oy in y0..y1 {
                            let iy = oy * s + ky - p;
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            let irow = &input[iy * wd..(iy + 1) * wd];
                            if s == 1 {
                                let ix0 = x0 + kx - p;
                                for (ov, iv) in orow[x0..x1].iter_mut().zip(&irow[ix0..]) {
                                    *ov += wv * iv;
                                }
                            } else {
                                for ox in x0..x1 {
                                    orow[ox] += wv * irow[ox * s + kx - p];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Returns `(dx, dw, db)`.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    geo: ConvGeometry,
    dout: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let [n, ic, h, wd] = x.dims();
    let [oc, _, kh, kw] = w.dims();
    let [_, _, oh, ow] = dout.dims();
    let s = geo.stride;
    let p = geo.padding;
    let mut dx = Tensor::zeros(x.dims());
    let mut dw = Tensor::zeros(w.dims());
    let mut db = Tensor::zeros([1, oc, 1, 1]);
    let xs = x.data();
    let ws = w.data();
    let gs = dout.data();
    let out_plane = oh * ow;
    let in_plane = h * wd;

    for bi in 0..n {
        for o in 0..oc {
            let gbase = (bi * oc + o) * out_plane;
            let g = &gs[gbase..gbase + out_plane];
            db.data_mut()[o] += g.iter().sum::<f64>();
            for i in 0..ic {
                let ibase = (bi * ic + i) * in_plane;
                let input = &xs[ibase..ibase + in_plane];
                for ky in 0..kh {
                    let (y0, y1) = tap_range(ky, geo, h, oh);
                    for kx in 0..kw {
                        let widx = ((o * ic + i) * kh + ky) * kw + kx;
                        let wv = ws[widx];
                        let (x0, x1) = tap_range(kx, geo, wd, ow);
                        let mut acc = 0.0;
                        for oy in y0..y1 {
                            let iy = oy * s + ky - p;
                            let grow = &g[oy * ow..(oy + 1) * ow];
                            let row = iy * wd;
                            for ox in x0..x1 {
                                let ix = ox * s + kx - p;
                                acc += grow[ox] * input[row + ix];
                            }
                            let dxd = dx.data_mut();
                            for ox in x0..x1 {
                                let ix = ox * s + kx - p;
                                dxd[ibase + row + ix] += wv * grow[ox];
                            }
                        }
                        dw.data_mut()[widx] += acc;
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

// ---------------------------------------------------------------------------
// channel reductions

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelReduce {
    Median,
    Mean,
    Max,
}

/// Which channels each output position draws from. For the median with an
/// even channel count both middle order statistics are kept.
#[derive(Debug, Clone)]
pub enum ReduceRoute {
    Mean,
    /// `(lower, upper)` channel index per position; equal for odd counts.
    Median(Vec<(u32, u32)>),
    Max(Vec<u32>),
}

/// Per-position channel median; even channel counts average the two middle
/// values.
pub fn median_pool_channels(x: &Tensor) -> Result<Tensor> {
    Ok(reduce_channels(x, ChannelReduce::Median)?.0)
}

/// Reduces over the channel axis to a `[n, 1, h, w]` map.
///
/// Median ranks channels by `(value, channel index)`, so ties select the
/// lowest channel index.
pub fn reduce_channels(x: &Tensor, mode: ChannelReduce) -> Result<(Tensor, ReduceRoute, f64)> {
    let [n, c, h, w] = x.dims();
    if c == 0 || x.is_empty() {
        return Err(Error::InvalidTensor("channel reduction of an empty tensor".into()));
    }
    let plane = h * w;
    let mut out = Tensor::zeros([n, 1, h, w]);
    let mut margin = f64::INFINITY;
    let xs = x.data();
    let route = match mode {
        ChannelReduce::Mean => {
            for bi in 0..n {
                for pos in 0..plane {
                    let s: f64 = (0..c).map(|ch| xs[(bi * c + ch) * plane + pos]).sum();
                    out.data_mut()[bi * plane + pos] = s / c as f64;
                }
            }
            ReduceRoute::Mean
        }
        ChannelReduce::Max => {
            let mut idx = Vec::with_capacity(n * plane);
            for bi in 0..n {
                for pos in 0..plane {
                    let mut best = 0usize;
                    let mut best_v = xs[bi * c * plane + pos];
                    let mut second = f64::NEG_INFINITY;
                    for ch in 1..c {
                        let v = xs[(bi * c + ch) * plane + pos];
                        if v > best_v {
                            second = best_v;
                            best_v = v;
                            best = ch;
                        } else if v > second {
                            second = v;
                        }
                    }
                    margin = margin.min(best_v - second);
                    out.data_mut()[bi * plane + pos] = best_v;
                    idx.push(best as u32);
                }
            }
            ReduceRoute::Max(idx)
        }
        ChannelReduce::Median => {
            let mut idx = Vec::with_capacity(n * plane);
            let mut order: Vec<(f64, u32)> = Vec::with_capacity(c);
            for bi in 0..n {
                for pos in 0..plane {
                    order.clear();
                    order.extend((0..c).map(|ch| (xs[(bi * c + ch) * plane + pos], ch as u32)));
                    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    let mid = c / 2;
                    let (lo, hi, value) = if c % 2 == 1 {
                        if c > 1 {
                            margin = margin
                                .min(order[mid].0 - order[mid - 1].0)
                                .min(order[mid + 1].0 - order[mid].0);
                        }
                        (order[mid].1, order[mid].1, order[mid].0)
                    } else {
                        if c > 2 {
                            margin = margin
                                .min(order[mid - 1].0 - order[mid - 2].0)
                                .min(order[mid + 1].0 - order[mid].0);
                        }
                        (
                            order[mid - 1].1,
                            order[mid].1,
                            0.5 * (order[mid - 1].0 + order[mid].0),
                        )
                    };
                    out.data_mut()[bi * plane + pos] = value;
                    idx.push((lo, hi));
                }
            }
            ReduceRoute::Median(idx)
        }
    };
    Ok((out, route, margin))
}

pub fn reduce_channels_backward(x_dims: Dims, route: &ReduceRoute, dout: &Tensor) -> Tensor {
    let [n, c, h, w] = x_dims;
    let plane = h * w;
    let mut dx = Tensor::zeros(x_dims);
    let g = dout.data();
    let d = dx.data_mut();
    for bi in 0..n {
        for pos in 0..plane {
            let gv = g[bi * plane + pos];
            let k = bi * plane + pos;
            match route {
                ReduceRoute::Mean => {
                    for ch in 0..c {
                        d[(bi * c + ch) * plane + pos] += gv / c as f64;
                    }
                }
                ReduceRoute::Max(idx) => {
                    d[(bi * c + idx[k] as usize) * plane + pos] += gv;
                }
                ReduceRoute::Median(idx) => {
                    let (lo, hi) = idx[k];
                    if lo == hi {
                        d[(bi * c + lo as usize) * plane + pos] += gv;
                    } else {
                        d[(bi * c + lo as usize) * plane + pos] += 0.5 * gv;
                        d[(bi * c + hi as usize) * plane + pos] += 0.5 * gv;
                    }
                }
            }
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// global spatial pooling

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialPool {
    Avg,
    Max,
}

/// Reduces `[n, c, h, w]` to `[n, c, 1, 1]`. The route holds the flat
/// in-plane argmax (first index on ties) for max pooling.
pub fn global_pool(x: &Tensor, mode: SpatialPool) -> Result<(Tensor, Vec<u32>, f64)> {
    let [n, c, h, w] = x.dims();
    let plane = h * w;
    if plane == 0 {
        return Err(Error::InvalidTensor("global pooling over an empty plane".into()));
    }
    let mut out = Tensor::zeros([n, c, 1, 1]);
    let mut arg = Vec::new();
    let mut margin = f64::INFINITY;
    for (k, chunk) in x.data().chunks_exact(plane).enumerate() {
        out.data_mut()[k] = match mode {
            SpatialPool::Avg => chunk.iter().sum::<f64>() / plane as f64,
            SpatialPool::Max => {
                let mut best = 0;
                let mut second = f64::NEG_INFINITY;
                for (i, &v) in chunk.iter().enumerate().skip(1) {
                    if v > chunk[best] {
                        second = chunk[best];
                        best = i;
                    } else if v > second {
                        second = v;
                    }
                }
                margin = margin.min(chunk[best] - second);
                arg.push(best as u32);
                chunk[best]
            }
        };
    }
    Ok((out, arg, margin))
}

pub fn global_pool_backward(x_dims: Dims, mode: SpatialPool, arg: &[u32], dout: &Tensor) -> Tensor {
    let [_, _, h, w] = x_dims;
    let plane = h * w;
    let mut dx = Tensor::zeros(x_dims);
    for (k, chunk) in dx.data_mut().chunks_exact_mut(plane).enumerate() {
        let g = dout.data()[k];
        match mode {
            SpatialPool::Avg => chunk.iter_mut().for_each(|v| *v = g / plane as f64),
            SpatialPool::Max => chunk[arg[k] as usize] = g,
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// bilinear resampling

/// Resampling factor `num / den`, restricted to the ratios the network uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scale {
    num: usize,
    den: usize,
}

impl Scale {
    pub const HALF: Scale = Scale { num: 1, den: 2 };
    pub const QUARTER: Scale = Scale { num: 1, den: 4 };
    pub const DOUBLE: Scale = Scale { num: 2, den: 1 };
    pub const QUADRUPLE: Scale = Scale { num: 4, den: 1 };

    pub fn new(num: usize, den: usize) -> Result<Self> {
        let g = gcd(num, den.max(1));
        let s = Scale {
            num: num / g.max(1),
            den: den / g.max(1),
        };
        if [Self::HALF, Self::QUARTER, Self::DOUBLE, Self::QUADRUPLE].contains(&s) {
            Ok(s)
        } else {
            Err(Error::Config(format!(
                "unsupported resize scale {num}/{den}; expected 1/2, 1/4, 2 or 4"
            )))
        }
    }

    pub fn factor(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn apply(self, len: usize) -> usize {
        len * self.num / self.den
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Per output index: `(i0, i1, weight0, weight1)` under the half-pixel-center
/// convention, with the source coordinate clamped at zero.
fn interp_table(in_len: usize, out_len: usize, factor: f64) -> Vec<(usize, usize, f64, f64)> {
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) / factor - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            let l1 = src - i0 as f64;
            let l1 = if i0 == i1 { 0.0 } else { l1 };
            (i0, i1, 1.0 - l1, l1)
        })
        .collect()
}

pub fn resize_bilinear(x: &Tensor, scale: Scale) -> Result<Tensor> {
    let [n, c, h, w] = x.dims();
    let (oh, ow) = (scale.apply(h), scale.apply(w));
    if oh == 0 || ow == 0 {
        return Err(Error::Config(format!(
            "resize by {} of {h}x{w} yields an empty image",
            scale.factor()
        )));
    }
    let ty = interp_table(h, oh, scale.factor());
    let tx = interp_table(w, ow, scale.factor());
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let xs = x.data();
    for (k, plane) in out.data_mut().chunks_exact_mut(oh * ow).enumerate() {
        let src = &xs[k * h * w..(k + 1) * h * w];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let top = wx0 * src[y0 * w + x0] + wx1 * src[y0 * w + x1];
                let bot = wx0 * src[y1 * w + x0] + wx1 * src[y1 * w + x1];
                plane[oy * ow + ox] = wy0 * top + wy1 * bot;
            }
        }
    }
    Ok(out)
}

pub fn resize_bilinear_backward(x_dims: Dims, scale: Scale, dout: &Tensor) -> Tensor {
    let [_, _, h, w] = x_dims;
    let [_, _, oh, ow] = dout.dims();
    let ty = interp_table(h, oh, scale.factor());
    let tx = interp_table(w, ow, scale.factor());
    let mut dx = Tensor::zeros(x_dims);
    let gs = dout.data();
    for (k, plane) in dx.data_mut().chunks_exact_mut(h * w).enumerate() {
        let g = &gs[k * oh * ow..(k + 1) * oh * ow];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let gv = g[oy * ow + ox];
                plane[y0 * w + x0] += gv * wy0 * wx0;
                plane[y0 * w + x1] += gv * wy0 * wx1;
                plane[y1 * w + x0] += gv * wy1 * wx0;
                plane[y1 * w + x1] += gv * wy1 * wx1;
            }
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// elementwise

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Mul,
}

/// `y` must match `x` on the batch axis; each of its other axes either
/// matches `x` or has extent 1 and is broadcast.
fn check_broadcast(op: &'static str, x: Dims, y: Dims) -> Result<()> {
    let ok = x[0] == y[0] && (1..4).all(|i| y[i] == x[i] || y[i] == 1);
    if ok {
        Ok(())
    } else {
        Err(Error::Shape { op, lhs: x, rhs: y })
    }
}

#[inline]
fn bcast_index(y: Dims, n: usize, c: usize, h: usize, w: usize) -> usize {
    let c = if y[1] == 1 { 0 } else { c };
    let h = if y[2] == 1 { 0 } else { h };
    let w = if y[3] == 1 { 0 } else { w };
    ((n * y[1] + c) * y[2] + h) * y[3] + w
}

pub fn binary(x: &Tensor, y: &Tensor, op: Binary) -> Result<Tensor> {
    let name = match op {
        Binary::Add => "add",
        Binary::Mul => "mul",
    };
    check_broadcast(name, x.dims(), y.dims())?;
    if x.dims() == y.dims() {
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| match op {
                Binary::Add => a + b,
                Binary::Mul => a * b,
            })
            .collect();
        return Tensor::new(x.dims(), data);
    }
    let yd = y.dims();
    Ok(Tensor::from_fn(x.dims(), |n, c, h, w| {
        let a = x.at(n, c, h, w);
        let b = y.data()[bcast_index(yd, n, c, h, w)];
        match op {
            Binary::Add => a + b,
            Binary::Mul => a * b,
        }
    }))
}

/// Returns `(dx, dy)` with `dy` summed over broadcast axes.
pub fn binary_backward(x: &Tensor, y: &Tensor, op: Binary, dout: &Tensor) -> (Tensor, Tensor) {
    let xd = x.dims();
    let yd = y.dims();
    let mut dx = Tensor::zeros(xd);
    let mut dy = Tensor::zeros(yd);
    let [n, c, h, w] = xd;
    let mut k = 0;
    for bi in 0..n {
        for ch in 0..c {
            for yy in 0..h {
                for xx in 0..w {
                    let g = dout.data()[k];
                    let j = bcast_index(yd, bi, ch, yy, xx);
                    match op {
                        Binary::Add => {
                            dx.data_mut()[k] = g;
                            dy.data_mut()[j] += g;
                        }
                        Binary::Mul => {
                            dx.data_mut()[k] = g * y.data()[j];
                            dy.data_mut()[j] += g * x.data()[k];
                        }
                    }
                    k += 1;
                }
            }
        }
    }
    (dx, dy)
}

pub fn relu(x: &Tensor) -> (Tensor, f64) {
    let margin = x.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    (x.map(|v| v.max(0.0)), margin)
}

pub fn relu_backward(x: &Tensor, dout: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(dout.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.dims(), data).expect("relu gradient dims")
}

#[inline]
pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Uses the forward output `y = sigmoid(x)`.
pub fn sigmoid_backward(y: &Tensor, dout: &Tensor) -> Tensor {
    let data = y
        .data()
        .iter()
        .zip(dout.data())
        .map(|(&s, &g)| g * s * (1.0 - s))
        .collect();
    Tensor::new(y.dims(), data).expect("sigmoid gradient dims")
}

pub fn clamp(x: &Tensor, lo: f64, hi: f64) -> (Tensor, f64) {
    let margin = x
        .data()
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min((v - lo).abs()).min((v - hi).abs()));
    (x.map(|v| v.clamp(lo, hi)), margin)
}

pub fn clamp_backward(x: &Tensor, lo: f64, hi: f64, dout: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(dout.data())
        .map(|(&v, &g)| if v > lo && v < hi { g } else { 0.0 })
        .collect();
    Tensor::new(x.dims(), data).expect("clamp gradient dims")
}

/// Softmax across a list of equally shaped logit tensors, independently at
/// every `(n, c, h, w)` position.
pub fn softmax_branches(logits: &[&Tensor]) -> Result<Vec<Tensor>> {
    let first = logits
        .first()
        .ok_or_else(|| Error::Config("softmax over zero branches".into()))?;
    for l in logits {
        if l.dims() != first.dims() {
            return Err(Error::Shape {
                op: "softmax_branches",
                lhs: first.dims(),
                rhs: l.dims(),
            });
        }
    }
    let mut outs: Vec<Tensor> = logits.iter().map(|l| Tensor::zeros(l.dims())).collect();
    for k in 0..first.len() {
        let m = logits
            .iter()
            .map(|l| l.data()[k])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (o, l) in outs.iter_mut().zip(logits) {
            let e = (l.data()[k] - m).exp();
            o.data_mut()[k] = e;
            z += e;
        }
        for o in outs.iter_mut() {
            o.data_mut()[k] /= z;
        }
    }
    Ok(outs)
}

/// `weights` are the forward outputs; `douts[j]` is the upstream gradient of
/// output `j`, if any. Returns one gradient per logit tensor.
pub fn softmax_branches_backward(weights: &[Tensor], douts: &[Option<&Tensor>]) -> Vec<Tensor> {
    let dims = weights[0].dims();
    let mut grads: Vec<Tensor> = weights.iter().map(|_| Tensor::zeros(dims)).collect();
    for k in 0..weights[0].len() {
        let dot: f64 = weights
            .iter()
            .zip(douts)
            .map(|(s, g)| g.map_or(0.0, |g| g.data()[k] * s.data()[k]))
            .sum();
        for (j, s) in weights.iter().enumerate() {
            let gj = douts[j].map_or(0.0, |g| g.data()[k]);
            grads[j].data_mut()[k] = s.data()[k] * (gj - dot);
        }
    }
    grads
}

pub fn concat_channels(xs: &[&Tensor]) -> Result<Tensor> {
    let first = xs
        .first()
        .ok_or_else(|| Error::Config("concat of zero tensors".into()))?;
    let [n, _, h, w] = first.dims();
    for t in xs {
        let [tn, _, th, tw] = t.dims();
        if (tn, th, tw) != (n, h, w) {
            return Err(Error::Shape {
                op: "concat_channels",
                lhs: first.dims(),
                rhs: t.dims(),
            });
        }
    }
    let c_total: usize = xs.iter().map(|t| t.channels()).sum();
    let plane = h * w;
    let mut data = Vec::with_capacity(n * c_total * plane);
    for bi in 0..n {
        for t in xs {
            let block = t.channels() * plane;
            data.extend_from_slice(&t.data()[bi * block..(bi + 1) * block]);
        }
    }
    Tensor::new([n, c_total, h, w], data)
}

pub fn concat_channels_backward(parts: &[Dims], dout: &Tensor) -> Vec<Tensor> {
    let [n, c_total, h, w] = dout.dims();
    let plane = h * w;
    let mut grads: Vec<Tensor> = parts.iter().map(|&d| Tensor::zeros(d)).collect();
    for bi in 0..n {
        let mut ch0 = 0;
        for g in grads.iter_mut() {
            let c = g.channels();
            let src = &dout.data()[(bi * c_total + ch0) * plane..(bi * c_total + ch0 + c) * plane];
            g.data_mut()[bi * c * plane..(bi + 1) * c * plane].copy_from_slice(src);
            ch0 += c;
        }
    }
    grads
}

// ---------------------------------------------------------------------------
// losses

/// `mean(sqrt((pred - target)^2 + eps^2))`.
pub fn charbonnier(pred: &Tensor, target: &Tensor, eps: f64) -> Result<f64> {
    if pred.dims() != target.dims() {
        return Err(Error::Shape {
            op: "charbonnier",
            lhs: pred.dims(),
            rhs: target.dims(),
        });
    }
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| ((p - t) * (p - t) + eps * eps).sqrt())
        .sum();
    Ok(total / pred.len() as f64)
}

/// Gradient of [`charbonnier`] with respect to `pred`, scaled by `dout`.
pub fn charbonnier_backward(pred: &Tensor, target: &Tensor, eps: f64, dout: f64) -> Tensor {
    let scale = dout / pred.len() as f64;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            scale * d / (d * d + eps * eps).sqrt()
        })
        .collect();
    Tensor::new(pred.dims(), data).expect("charbonnier gradient dims")
}
