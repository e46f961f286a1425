//! The enhancement network: multi-scale residual blocks built from dual
//! attention units (channel attention plus median-pooled spatial attention)
//! and selective kernel feature fusion.

mod config;
mod net;
mod params;

pub use config::{NetConfig, SpatialPooling};
pub use net::Net;
pub use params::{layout, ModelParams, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub(crate) use params::path_hash;

use crate::error::Result;
use crate::graph::{Eval, Graph};
use crate::tensor::Tensor;

/// Runs the enhancer on an `[n, 3, h, w]` batch without recording gradients.
pub fn enhance(params: &ModelParams, image: &Tensor) -> Result<Tensor> {
    let mut g = Eval;
    let mut net = Net::new(&mut g, params);
    let x = net.g.input(image.clone());
    let y = net.forward(&x)?;
    Ok(std::rc::Rc::unwrap_or_clone(y))
}
