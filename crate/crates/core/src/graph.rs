//! The operation surface shared by the recording [`Tape`](crate::tape::Tape)
//! and the gradient-free [`Eval`] graph.
//!
//! Network code is written once against [`Graph`]; training runs it on a tape,
//! inference runs it on `Eval`, which drops intermediates as soon as they go
//! out of scope.

use std::rc::Rc;

use crate::error::Result;
use crate::ops::{self, Binary, ChannelReduce, ConvGeometry, Scale, SpatialPool};
use crate::tensor::Tensor;

pub trait Graph {
    type Var: Clone;

    /// Introduces a tensor that is not the result of a recorded operation.
    fn input(&mut self, t: Tensor) -> Self::Var;

    fn value<'a>(&'a self, v: &'a Self::Var) -> Result<&'a Tensor>;

    fn conv2d(
        &mut self,
        x: &Self::Var,
        w: &Self::Var,
        b: &Self::Var,
        geo: ConvGeometry,
    ) -> Result<Self::Var>;

    fn reduce_channels(&mut self, x: &Self::Var, mode: ChannelReduce) -> Result<Self::Var>;

    fn global_pool(&mut self, x: &Self::Var, mode: SpatialPool) -> Result<Self::Var>;

    fn resize(&mut self, x: &Self::Var, scale: Scale) -> Result<Self::Var>;

    fn binary(&mut self, x: &Self::Var, y: &Self::Var, op: Binary) -> Result<Self::Var>;

    fn relu(&mut self, x: &Self::Var) -> Result<Self::Var>;

    fn sigmoid(&mut self, x: &Self::Var) -> Result<Self::Var>;

    fn clamp(&mut self, x: &Self::Var, lo: f64, hi: f64) -> Result<Self::Var>;

    fn softmax_branches(&mut self, logits: &[Self::Var]) -> Result<Vec<Self::Var>>;

    fn concat_channels(&mut self, xs: &[Self::Var]) -> Result<Self::Var>;

    /// Sum of all elements as a `[1, 1, 1, 1]` scalar.
    fn sum(&mut self, x: &Self::Var) -> Result<Self::Var>;

    fn charbonnier(&mut self, pred: &Self::Var, target: &Self::Var, eps: f64) -> Result<Self::Var>;

    fn add(&mut self, x: &Self::Var, y: &Self::Var) -> Result<Self::Var> {
        self.binary(x, y, Binary::Add)
    }

    fn mul(&mut self, x: &Self::Var, y: &Self::Var) -> Result<Self::Var> {
        self.binary(x, y, Binary::Mul)
    }
}

/// Forward-only evaluation.
#[derive(Debug, Default)]
pub struct Eval;

impl Graph for Eval {
    type Var = Rc<Tensor>;

    fn input(&mut self, t: Tensor) -> Self::Var {
        Rc::new(t)
    }

    fn value<'a>(&'a self, v: &'a Self::Var) -> Result<&'a Tensor> {
        Ok(v)
    }

    fn conv2d(
        &mut self,
        x: &Self::Var,
        w: &Self::Var,
        b: &Self::Var,
        geo: ConvGeometry,
    ) -> Result<Self::Var> {
        ops::conv2d(x, w, b, geo).map(Rc::new)
    }

    fn reduce_channels(&mut self, x: &Self::Var, mode: ChannelReduce) -> Result<Self::Var> {
        ops::reduce_channels(x, mode).map(|(t, _, _)| Rc::new(t))
    }

    fn global_pool(&mut self, x: &Self::Var, mode: SpatialPool) -> Result<Self::Var> {
        ops::global_pool(x, mode).map(|(t, _, _)| Rc::new(t))
    }

    fn resize(&mut self, x: &Self::Var, scale: Scale) -> Result<Self::Var> {
        ops::resize_bilinear(x, scale).map(Rc::new)
    }

    fn binary(&mut self, x: &Self::Var, y: &Self::Var, op: Binary) -> Result<Self::Var> {
        ops::binary(x, y, op).map(Rc::new)
    }

    fn relu(&mut self, x: &Self::Var) -> Result<Self::Var> {
        Ok(Rc::new(ops::relu(x).0))
    }

    fn sigmoid(&mut self, x: &Self::Var) -> Result<Self::Var> {
        Ok(Rc::new(ops::sigmoid(x)))
    }

    fn clamp(&mut self, x: &Self::Var, lo: f64, hi: f64) -> Result<Self::Var> {
        Ok(Rc::new(ops::clamp(x, lo, hi).0))
    }

    fn softmax_branches(&mut self, logits: &[Self::Var]) -> Result<Vec<Self::Var>> {
        let refs: Vec<&Tensor> = logits.iter().map(|l| l.as_ref()).collect();
        Ok(ops::softmax_branches(&refs)?.into_iter().map(Rc::new).collect())
    }

    fn concat_channels(&mut self, xs: &[Self::Var]) -> Result<Self::Var> {
        let refs: Vec<&Tensor> = xs.iter().map(|l| l.as_ref()).collect();
        ops::concat_channels(&refs).map(Rc::new)
    }

    fn sum(&mut self, x: &Self::Var) -> Result<Self::Var> {
        Ok(Rc::new(Tensor::scalar(x.sum())))
    }

    fn charbonnier(&mut self, pred: &Self::Var, target: &Self::Var, eps: f64) -> Result<Self::Var> {
        ops::charbonnier(pred, target, eps).map(|v| Rc::new(Tensor::scalar(v)))
    }
}
