//! Reverse-mode automatic differentiation over recorded tensor operations.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::ops::{self, Binary, ChannelReduce, ConvGeometry, ReduceRoute, Scale, SpatialPool};
use crate::tensor::{Dims, Tensor};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a specific [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId {
    tape: u64,
    index: usize,
}

impl NodeId {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv {
        x: usize,
        w: usize,
        b: usize,
        geo: ConvGeometry,
    },
    Reduce {
        x: usize,
        route: ReduceRoute,
    },
    Pool {
        x: usize,
        mode: SpatialPool,
        arg: Vec<u32>,
    },
    Resize {
        x: usize,
        scale: Scale,
    },
    Binary {
        x: usize,
        y: usize,
        op: Binary,
    },
    Relu {
        x: usize,
    },
    Sigmoid {
        x: usize,
    },
    Clamp {
        x: usize,
        lo: f64,
        hi: f64,
    },
    /// Output `index` of a softmax over `logits`.
    SoftmaxBranch {
        logits: Vec<usize>,
        index: usize,
    },
    Concat {
        parts: Vec<usize>,
    },
    Sum {
        x: usize,
    },
    Charbonnier {
        pred: usize,
        target: usize,
        eps: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Single-owner record of a forward computation.
///
/// Nodes are appended in execution order, so walking them backwards is a
/// valid reverse topological order.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    kink_margin: f64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            kink_margin: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest distance from any recorded input to a non-differentiable
    /// point of its operation (relu at 0, median/max reorderings, clamp
    /// bounds). `INFINITY` when no such operation was recorded.
    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf)
    }

    pub fn get(&self, id: NodeId) -> Result<&Tensor> {
        self.check(id).map(|i| &self.nodes[i].value)
    }

    fn check(&self, id: NodeId) -> Result<usize> {
        if id.tape != self.id || id.index >= self.nodes.len() {
            return Err(Error::NotOnTape { node: id.index });
        }
        Ok(id.index)
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn val(&self, i: usize) -> &Tensor {
        &self.nodes[i].value
    }

    fn note_margin(&mut self, m: f64) {
        self.kink_margin = self.kink_margin.min(m);
    }

    /// Propagates gradients from the scalar `loss` to every node it depends on.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let li = self.check(loss)?;
        if self.val(li).len() != 1 {
            return Err(Error::Shape {
                op: "backward (loss must be scalar)",
                lhs: self.val(li).dims(),
                rhs: [1, 1, 1, 1],
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[li] = Some(Tensor::full(self.val(li).dims(), 1.0));

        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Conv { x, w, geo, b } => {
                    let (dx, dw, db) = ops::conv2d_backward(self.val(*x), self.val(*w), *geo, &g);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db);
                }
                Op::Reduce { x, route } => {
                    let dx = ops::reduce_channels_backward(self.val(*x).dims(), route, &g);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Pool { x, mode, arg } => {
                    let dx = ops::global_pool_backward(self.val(*x).dims(), *mode, arg, &g);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Resize { x, scale } => {
                    let dx = ops::resize_bilinear_backward(self.val(*x).dims(), *scale, &g);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Binary { x, y, op } => {
                    let (dx, dy) = ops::binary_backward(self.val(*x), self.val(*y), *op, &g);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *y, dy);
                }
                Op::Relu { x } => {
                    let dx = ops::relu_backward(self.val(*x), &g);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Sigmoid { x } => {
                    let dx = ops::sigmoid_backward(&self.nodes[i].value, &g);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Clamp { x, lo, hi } => {
                    let dx = ops::clamp_backward(self.val(*x), *lo, *hi, &g);
                    accumulate(&mut grads, *x, dx);
                }
                Op::SoftmaxBranch { logits, index } => {
                    let refs: Vec<&Tensor> = logits.iter().map(|&l| self.val(l)).collect();
                    let weights = ops::softmax_branches(&refs)?;
                    let mut douts: Vec<Option<&Tensor>> = vec![None; logits.len()];
                    douts[*index] = Some(&g);
                    let dl = ops::softmax_branches_backward(&weights, &douts);
                    for (&l, d) in logits.iter().zip(dl) {
                        accumulate(&mut grads, l, d);
                    }
                }
                Op::Concat { parts } => {
                    let dims: Vec<Dims> = parts.iter().map(|&p| self.val(p).dims()).collect();
                    let ds = ops::concat_channels_backward(&dims, &g);
                    for (&p, d) in parts.iter().zip(ds) {
                        accumulate(&mut grads, p, d);
                    }
                }
                Op::Sum { x } => {
                    let dx = Tensor::full(self.val(*x).dims(), g.data()[0]);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Charbonnier { pred, target, eps } => {
                    let dx = ops::charbonnier_backward(
                        self.val(*pred),
                        self.val(*target),
                        *eps,
                        g.data()[0],
                    );
                    accumulate(&mut grads, *pred, dx);
                }
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }

        Ok(Gradients {
            tape: self.id,
            dims: self.nodes.iter().map(|n| n.value.dims()).collect(),
            grads,
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], i: usize, d: Tensor) {
    match &mut grads[i] {
        Some(g) => g.add_assign(&d),
        slot => *slot = Some(d),
    }
}

/// Gradients of a scalar with respect to the leaves of a tape.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    dims: Vec<Dims>,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf; `None` when the loss does not depend on it.
    pub fn get(&self, id: NodeId) -> Result<Option<&Tensor>> {
        if id.tape != self.tape || id.index >= self.grads.len() {
            return Err(Error::NotOnTape { node: id.index });
        }
        Ok(self.grads[id.index].as_ref())
    }

    /// Like [`get`](Self::get) but yields zeros for unreached leaves.
    pub fn wrt(&self, id: NodeId) -> Result<Tensor> {
        Ok(match self.get(id)? {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.dims[id.index]),
        })
    }
}

impl Graph for Tape {
    type Var = NodeId;

    fn input(&mut self, t: Tensor) -> NodeId {
        self.leaf(t)
    }

    fn value<'a>(&'a self, v: &'a NodeId) -> Result<&'a Tensor> {
        self.get(*v)
    }

    fn conv2d(&mut self, x: &NodeId, w: &NodeId, b: &NodeId, geo: ConvGeometry) -> Result<NodeId> {
        let (x, w, b) = (self.check(*x)?, self.check(*w)?, self.check(*b)?);
        let out = ops::conv2d(self.val(x), self.val(w), self.val(b), geo)?;
        Ok(self.push(out, Op::Conv { x, w, b, geo }))
    }

    fn reduce_channels(&mut self, x: &NodeId, mode: ChannelReduce) -> Result<NodeId> {
        let x = self.check(*x)?;
        let (out, route, margin) = ops::reduce_channels(self.val(x), mode)?;
        self.note_margin(margin);
        Ok(self.push(out, Op::Reduce { x, route }))
    }

    fn global_pool(&mut self, x: &NodeId, mode: SpatialPool) -> Result<NodeId> {
        let x = self.check(*x)?;
        let (out, arg, margin) = ops::global_pool(self.val(x), mode)?;
        self.note_margin(margin);
        Ok(self.push(out, Op::Pool { x, mode, arg }))
    }

    fn resize(&mut self, x: &NodeId, scale: Scale) -> Result<NodeId> {
        let x = self.check(*x)?;
        let out = ops::resize_bilinear(self.val(x), scale)?;
        Ok(self.push(out, Op::Resize { x, scale }))
    }

    fn binary(&mut self, x: &NodeId, y: &NodeId, op: Binary) -> Result<NodeId> {
        let (x, y) = (self.check(*x)?, self.check(*y)?);
        let out = ops::binary(self.val(x), self.val(y), op)?;
        Ok(self.push(out, Op::Binary { x, y, op }))
    }

    fn relu(&mut self, x: &NodeId) -> Result<NodeId> {
        let x = self.check(*x)?;
        let (out, margin) = ops::relu(self.val(x));
        self.note_margin(margin);
        Ok(self.push(out, Op::Relu { x }))
    }

    fn sigmoid(&mut self, x: &NodeId) -> Result<NodeId> {
        let x = self.check(*x)?;
        let out = ops::sigmoid(self.val(x));
        Ok(self.push(out, Op::Sigmoid { x }))
    }

    fn clamp(&mut self, x: &NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        let x = self.check(*x)?;
        let (out, margin) = ops::clamp(self.val(x), lo, hi);
        self.note_margin(margin);
        Ok(self.push(out, Op::Clamp { x, lo, hi }))
    }

    fn softmax_branches(&mut self, logits: &[NodeId]) -> Result<Vec<NodeId>> {
        let idx = logits
            .iter()
            .map(|l| self.check(*l))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor> = idx.iter().map(|&i| self.val(i)).collect();
        let outs = ops::softmax_branches(&refs)?;
        Ok(outs
            .into_iter()
            .enumerate()
            .map(|(index, t)| {
                self.push(
                    t,
                    Op::SoftmaxBranch {
                        logits: idx.clone(),
                        index,
                    },
                )
            })
            .collect())
    }

    fn concat_channels(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let parts = xs
            .iter()
            .map(|l| self.check(*l))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor> = parts.iter().map(|&i| self.val(i)).collect();
        let out = ops::concat_channels(&refs)?;
        Ok(self.push(out, Op::Concat { parts }))
    }

    fn sum(&mut self, x: &NodeId) -> Result<NodeId> {
        let x = self.check(*x)?;
        let out = Tensor::scalar(self.val(x).sum());
        Ok(self.push(out, Op::Sum { x }))
    }

    fn charbonnier(&mut self, pred: &NodeId, target: &NodeId, eps: f64) -> Result<NodeId> {
        let (pred, target) = (self.check(*pred)?, self.check(*target)?);
        let v = ops::charbonnier(self.val(pred), self.val(target), eps)?;
        Ok(self.push(Tensor::scalar(v), Op::Charbonnier { pred, target, eps }))
    }
}
