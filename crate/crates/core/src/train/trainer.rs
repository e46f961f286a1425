use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Eval, Graph};
use crate::mirnet::{ModelParams, Net, NetConfig};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::train::data::{random_crop_pair, reflect_pad_to_multiple, unpad, ImagePair};
use crate::train::metrics::psnr_from_mse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Side of the square random crop.
    pub crop: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub charbonnier_eps: f64,
    pub seed: u64,
    /// Rewritten after every epoch when set.
    pub curve_output: Option<PathBuf>,
    /// Receives `last.ckpt` after every epoch when set.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            crop: 128,
            batch: 4,
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            charbonnier_eps: 1e-3,
            seed: 0,
            curve_output: None,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_psnr_db: f64,
}

/// Per-epoch training curve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveLog {
    pub rows: Vec<CurveRow>,
}

pub const CURVE_HEADER: &str = "epoch,train_loss,val_loss,val_psnr_db";

impl CurveLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CURVE_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.epoch,
                sig6(r.train_loss),
                sig6(r.val_loss),
                sig6(r.val_psnr_db)
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Formats with six significant digits, fixed-point where reasonable.
pub fn sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-5..6).contains(&mag) {
        return format!("{v:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding can carry into a new leading digit, e.g. 9.999996 -> 10.00000
    let carried = s.trim_start_matches('-').trim_start_matches('0').split('.').next().map_or(0, str::len);
    if carried as i32 > mag + 1 && decimals > 0 {
        format!("{v:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

struct AdamSlot {
    m: Tensor,
    v: Tensor,
}

/// Adam state and the parameters it updates.
pub struct Trainer {
    params: ModelParams,
    config: TrainConfig,
    slots: BTreeMap<String, AdamSlot>,
    steps: usize,
}

impl Trainer {
    pub fn new(params: ModelParams, config: TrainConfig) -> Self {
        Self {
            params,
            config,
            slots: BTreeMap::new(),
            steps: 0,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One optimizer step on a `[b, 3, h, w]` batch; returns the loss before
    /// the update.
    pub fn step(&mut self, low: &Tensor, high: &Tensor, epoch: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let mut net = Net::new(&mut tape, &self.params);
        let x = net.g.input(low.clone());
        let y = net.forward(&x)?;
        let t = net.g.input(high.clone());
        let loss = net.g.charbonnier(&y, &t, self.config.charbonnier_eps)?;
        let bound: Vec<(String, _)> = net.bound().map(|(p, v)| (p.to_string(), *v)).collect();

        let value = tape.get(loss)?.data()[0];
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                step: self.steps,
                loss: value,
            });
        }
        let grads = tape.backward(loss)?;

        self.steps += 1;
        let c = &self.config;
        let t = self.steps as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (path, node) in bound {
            let g = grads.wrt(node)?;
            let p = self
                .params
                .get_mut(&path)
                .expect("bound parameters come from the model");
            let slot = self.slots.entry(path).or_insert_with(|| AdamSlot {
                m: Tensor::zeros(g.dims()),
                v: Tensor::zeros(g.dims()),
            });
            let it = p
                .data_mut()
                .iter_mut()
                .zip(slot.m.data_mut().iter_mut())
                .zip(slot.v.data_mut().iter_mut())
                .zip(g.data());
            for (((p, m), v), &g) in it {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= c.lr * m_hat / (v_hat.sqrt() + c.adam_eps);
            }
        }
        Ok(value)
    }

    /// Charbonnier loss and PSNR over full frames, pooled across all pixels
    /// of all pairs. Frames are reflect-padded to the network's divisor and
    /// cropped back before scoring.
    pub fn evaluate(&self, pairs: &[ImagePair]) -> Result<(f64, f64)> {
        evaluate(&self.params, pairs, self.config.charbonnier_eps)
    }
}

/// See [`Trainer::evaluate`]. Returns `(NaN, NaN)` for an empty set.
pub fn evaluate(params: &ModelParams, pairs: &[ImagePair], charbonnier_eps: f64) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let divisor = params.config().divisor();
    let mut loss_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    for p in pairs {
        let (padded, pad) = reflect_pad_to_multiple(&p.low, divisor);
        let mut g = Eval;
        let mut net = Net::new(&mut g, params);
        let x = net.g.input(padded);
        let y = net.forward(&x)?;
        let pred = unpad(&y, pad)?;
        for (a, b) in pred.data().iter().zip(p.high.data()) {
            let d = a - b;
            loss_sum += (d * d + charbonnier_eps * charbonnier_eps).sqrt();
            sq_sum += d * d;
        }
        count += pred.len();
    }
    let n = count as f64;
    Ok((loss_sum / n, psnr_from_mse(sq_sum / n, 1.0)))
}

fn check_setup(pairs: &[ImagePair], net: &NetConfig, cfg: &TrainConfig) -> Result<()> {
    net.validate()?;
    if pairs.is_empty() {
        return Err(Error::Config("no training pairs".into()));
    }
    if cfg.epochs == 0 || cfg.batch == 0 {
        return Err(Error::Config("epochs and batch must be >= 1".into()));
    }
    let d = net.divisor();
    if cfg.crop == 0 || !cfg.crop.is_multiple_of(d) {
        return Err(Error::Config(format!(
            "crop {} must be a positive multiple of {d}",
            cfg.crop
        )));
    }
    if let Some(p) = pairs
        .iter()
        .find(|p| p.height() < cfg.crop || p.width() < cfg.crop)
    {
        return Err(Error::Config(format!(
            "pair `{}` ({}x{}) is smaller than the {} crop",
            p.id,
            p.height(),
            p.width(),
            cfg.crop
        )));
    }
    Ok(())
}

/// Trains a freshly initialized enhancer on random crops of `pairs`.
///
/// Each epoch shuffles the pairs, draws one crop per pair and steps Adam on
/// mini-batches of `batch` crops, then scores `val_pairs` on full frames.
/// Everything random flows from `train_config.seed` and `net_config.seed`,
/// so repeated runs are bit-identical.
pub fn train(
    pairs: &[ImagePair],
    val_pairs: &[ImagePair],
    net_config: &NetConfig,
    train_config: &TrainConfig,
) -> Result<(ModelParams, CurveLog)> {
    check_setup(pairs, net_config, train_config)?;
    let params = ModelParams::init(net_config)?;
    train_from(params, pairs, val_pairs, train_config)
}

/// [`train`] starting from existing parameters.
pub fn train_from(
    params: ModelParams,
    pairs: &[ImagePair],
    val_pairs: &[ImagePair],
    train_config: &TrainConfig,
) -> Result<(ModelParams, CurveLog)> {
    check_setup(pairs, params.config(), train_config)?;
    let cfg = train_config.clone();
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trainer = Trainer::new(params, cfg.clone());
    let mut log = CurveLog::default();
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        for chunk in order.chunks(cfg.batch) {
            let crops = chunk
                .iter()
                .map(|&i| random_crop_pair(&pairs[i], cfg.crop, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let low: Vec<Tensor> = crops.iter().map(|c| c.low.clone()).collect();
            let high: Vec<Tensor> = crops.into_iter().map(|c| c.high).collect();
            let loss = trainer.step(&Tensor::stack(&low)?, &Tensor::stack(&high)?, epoch)?;
            losses.push(loss);
        }
        let train_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        let (val_loss, val_psnr_db) = trainer.evaluate(val_pairs)?;
        log.rows.push(CurveRow {
            epoch,
            train_loss,
            val_loss,
            val_psnr_db,
        });
        if let Some(path) = &cfg.curve_output {
            log.write_csv(path)?;
        }
        if let Some(dir) = &cfg.checkpoint_dir {
            trainer.params().save(dir.join("last.ckpt"))?;
        }
    }
    Ok((trainer.into_params(), log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::data::synthetic_dark_pairs;

    #[test]
    fn sig6_formatting() {
        assert_eq!(sig6(0.3000017), "0.300002");
        assert_eq!(sig6(20.0), "20.0000");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(9.999996), "10.0000");
        assert_eq!(sig6(1e-7), "1.00000e-7");
        assert_eq!(sig6(f64::INFINITY), "inf");
        assert_eq!(sig6(0.0), "0");
    }

    #[test]
    fn zero_lr_keeps_params() {
        let net = NetConfig::test().with_seed(3);
        let pairs = synthetic_dark_pairs(2, 8, 8, 1);
        let cfg = TrainConfig {
            epochs: 2,
            crop: 8,
            batch: 1,
            lr: 0.0,
            ..TrainConfig::default()
        };
        let (params, log) = train(&pairs, &[], &net, &cfg).unwrap();
        assert_eq!(params, ModelParams::init(&net).unwrap());
        assert_eq!(log.rows.len(), 2);
        assert!(log.rows[0].val_loss.is_nan());
    }

    #[test]
    fn rejects_bad_setup() {
        let net = NetConfig::test();
        let pairs = synthetic_dark_pairs(1, 8, 8, 1);
        let cfg = TrainConfig { crop: 5, ..TrainConfig::default() };
        assert!(train(&pairs, &[], &net, &cfg).is_err());
        let cfg = TrainConfig { crop: 16, ..TrainConfig::default() };
        assert!(train(&pairs, &[], &net, &cfg).is_err());
        let cfg = TrainConfig { crop: 8, ..TrainConfig::default() };
        assert!(train(&[], &[], &net, &cfg).is_err());
    }

    #[test]
    fn nan_input_aborts_with_step() {
        let net = NetConfig::test();
        let params = ModelParams::init(&net).unwrap();
        let mut t = Trainer::new(params, TrainConfig::default());
        let mut low = Tensor::full([1, 3, 8, 8], 0.5);
        low.data_mut()[5] = f64::NAN;
        let high = Tensor::full([1, 3, 8, 8], 0.5);
        match t.step(&low, &high, 7) {
            Err(Error::NonFiniteLoss { epoch, step, .. }) => {
                assert_eq!((epoch, step), (7, 0));
            }
            other => panic!("expected non-finite loss, got {other:?}"),
        }
    }
}
