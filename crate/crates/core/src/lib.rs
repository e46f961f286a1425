//! Low-light traffic-sign enhancement and detection evaluation.
//!
//! * [`tensor`], [`ops`], [`graph`], [`tape`], [`gradcheck`]: a small NCHW
//!   tensor engine with reverse-mode gradients.
//! * [`mirnet`]: the enhancement network and its checkpoint format.
//! * [`train`]: paired-image training with Charbonnier loss and PSNR tracking.
//! * [`eval`]: IoU matching, average precision and detection reports.
//! * [`dataset`]: GTSRB/GTSDB annotation conversion, PPM/PNG I/O and the
//!   low-quality image selector.
//! * [`pipeline`]: the raw-versus-enhanced detection comparison.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod mirnet;
pub mod ops;
pub mod pipeline;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Dims, Tensor};
