//! Central-difference verification of tape gradients.

mod suite;

pub use suite::{run_suite, run_target, CheckOutcome, DEFAULT_EPS, MIN_KINK_MARGIN, TARGETS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::Graph;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

const PROJECTION_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Scalarizes a tensor-valued function with fixed random weights in
/// `[0.5, 1.5)`, so every output element contributes to the checked gradient.
fn projected<F>(f: &F, tape: &mut Tape, x: NodeId) -> Result<NodeId>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    let y = f(tape, x)?;
    let dims = tape.get(y)?.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
    let r = Tensor::from_fn(dims, |_, _, _, _| rng.gen_range(0.5..1.5));
    let r = tape.leaf(r);
    let weighted = tape.mul(&y, &r)?;
    tape.sum(&weighted)
}

fn eval_projected<F>(f: &F, x: &Tensor) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let xn = tape.leaf(x.clone());
    let loss = projected(f, &mut tape, xn)?;
    Ok(tape.get(loss)?.data()[0])
}

/// Kink margin of `f` evaluated at `x`; see [`Tape::kink_margin`].
pub fn kink_margin<F>(f: &F, x: &Tensor) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let xn = tape.leaf(x.clone());
    f(&mut tape, xn)?;
    Ok(tape.kink_margin())
}

/// Max over all elements of `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    let all: Vec<usize> = (0..x.len()).collect();
    grad_check_at(f, x, eps, &all)
}

/// [`grad_check`] restricted to the listed flat element indices.
pub fn grad_check_at<F>(f: F, x: &Tensor, eps: f64, indices: &[usize]) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let xn = tape.leaf(x.clone());
    let loss = projected(&f, &mut tape, xn)?;
    let analytic = tape.backward(loss)?.wrt(xn)?;

    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for &i in indices {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = eval_projected(&f, &probe)?;
        probe.data_mut()[i] = orig - eps;
        let down = eval_projected(&f, &probe)?;
        probe.data_mut()[i] = orig;

        let numeric = (up - down) / (2.0 * eps);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
