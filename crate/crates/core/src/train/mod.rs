//! Supervised training of the enhancer on aligned low/high quality pairs.

mod data;
mod metrics;
mod trainer;

pub use data::{
    random_crop_pair, reflect_pad_to_multiple, synthetic_dark_pairs, unpad, ImagePair, Padding,
};
pub use metrics::{charbonnier_loss, mse, psnr, psnr_from_mse};
pub use trainer::{
    evaluate, sig6, train, train_from, CurveLog, CurveRow, TrainConfig, Trainer, CURVE_HEADER,
};
