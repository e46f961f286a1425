pub mod convert;
pub mod enhance;
pub mod eval;
pub mod gradcheck;
pub mod pipeline;
pub mod train;

use crate::config::Layers;
use crate::Common;

pub(crate) fn layers(common: &Common, section: &str) -> anyhow::Result<Layers> {
    let mut l = Layers::load(common.config.as_deref(), section)?;
    l.set("seed", crate::config::u(common.seed));
    Ok(l)
}
