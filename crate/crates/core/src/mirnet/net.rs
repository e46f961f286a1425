//! Building blocks of the enhancer and the full forward pass.
//!
//! Every block is a method on [`Net`], which pairs a [`Graph`] with the
//! parameter source. Parameters are requested by hierarchical path together
//! with the dims the block expects, so a checkpoint built for another
//! configuration fails with both shapes named.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::mirnet::config::{NetConfig, SpatialPooling};
use crate::mirnet::params::ModelParams;
use crate::ops::{ChannelReduce, ConvGeometry, Scale, SpatialPool};
use crate::tensor::{Dims, Tensor};

enum Source<'p> {
    Params(&'p ModelParams),
    /// No weights: hand out zeros and remember what was asked for.
    Discover(Vec<(String, Dims)>),
}

pub struct Net<'g, 'p, G: Graph> {
    pub g: &'g mut G,
    config: NetConfig,
    source: Source<'p>,
    bound: BTreeMap<String, (G::Var, Dims)>,
    gates: Option<Vec<(String, G::Var)>>,
}

impl<'g, 'p, G: Graph> Net<'g, 'p, G> {
    pub fn new(g: &'g mut G, params: &'p ModelParams) -> Self {
        Self {
            g,
            config: *params.config(),
            source: Source::Params(params),
            bound: BTreeMap::new(),
            gates: None,
        }
    }

    pub(crate) fn discover(g: &'g mut G, config: NetConfig) -> Self {
        Self {
            g,
            config,
            source: Source::Discover(Vec::new()),
            bound: BTreeMap::new(),
            gates: None,
        }
    }

    pub(crate) fn discovered(self) -> Vec<(String, Dims)> {
        match self.source {
            Source::Discover(found) => found,
            Source::Params(_) => Vec::new(),
        }
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    /// Substitutes `var` for the parameter at `path` on first use.
    pub fn bind(&mut self, path: &str, var: G::Var) -> Result<()> {
        let dims = self.g.value(&var)?.dims();
        self.bound.insert(path.to_string(), (var, dims));
        Ok(())
    }

    /// Parameter variables requested so far, by path.
    pub fn bound(&self) -> impl Iterator<Item = (&str, &G::Var)> {
        self.bound.iter().map(|(k, (v, _))| (k.as_str(), v))
    }

    /// Start keeping every attention gate and fusion weight produced.
    pub fn record_gates(&mut self) {
        self.gates = Some(Vec::new());
    }

    pub fn gates(&self) -> &[(String, G::Var)] {
        self.gates.as_deref().unwrap_or(&[])
    }

    fn note_gate(&mut self, path: String, v: &G::Var) {
        if let Some(gates) = &mut self.gates {
            gates.push((path, v.clone()));
        }
    }

    pub fn param(&mut self, path: String, dims: Dims) -> Result<G::Var> {
        if let Some((v, d)) = self.bound.get(&path) {
            if *d != dims {
                return Err(Error::CheckpointMismatch {
                    path,
                    expected: Some(dims),
                    found: Some(*d),
                });
            }
            return Ok(v.clone());
        }
        let t = match &mut self.source {
            Source::Params(p) => {
                let t = p.get(&path).ok_or_else(|| Error::CheckpointMismatch {
                    path: path.clone(),
                    expected: Some(dims),
                    found: None,
                })?;
                if t.dims() != dims {
                    return Err(Error::CheckpointMismatch {
                        path,
                        expected: Some(dims),
                        found: Some(t.dims()),
                    });
                }
                t.clone()
            }
            Source::Discover(found) => {
                found.push((path.clone(), dims));
                Tensor::zeros(dims)
            }
        };
        let v = self.g.input(t);
        self.bound.insert(path, (v.clone(), dims));
        Ok(v)
    }

    /// Same-padded stride-1 convolution with bias.
    pub fn conv(
        &mut self,
        prefix: &str,
        in_c: usize,
        out_c: usize,
        kernel: usize,
        x: &G::Var,
    ) -> Result<G::Var> {
        let w = self.param(format!("{prefix}.weight"), [out_c, in_c, kernel, kernel])?;
        let b = self.param(format!("{prefix}.bias"), [1, out_c, 1, 1])?;
        self.g.conv2d(x, &w, &b, ConvGeometry::same(kernel))
    }

    fn channels_of(&self, x: &G::Var) -> Result<usize> {
        Ok(self.g.value(x)?.channels())
    }

    fn expect_channels(&self, op: &'static str, x: &G::Var, c: usize) -> Result<()> {
        let dims = self.g.value(x)?.dims();
        if dims[1] != c {
            return Err(Error::Shape {
                op,
                lhs: dims,
                rhs: [dims[0], c, dims[2], dims[3]],
            });
        }
        Ok(())
    }

    /// `x * sigmoid(conv(relu(conv(GAP(x)))))`, gate broadcast over space.
    pub fn channel_attention(&mut self, prefix: &str, channels: usize, x: &G::Var) -> Result<G::Var> {
        self.expect_channels("channel_attention", x, channels)?;
        let hidden = self.config.bottleneck(channels);
        let s = self.g.global_pool(x, SpatialPool::Avg)?;
        let z = self.conv(&format!("{prefix}.squeeze"), channels, hidden, 1, &s)?;
        let z = self.g.relu(&z)?;
        let logits = self.conv(&format!("{prefix}.excite"), hidden, channels, 1, &z)?;
        let gate = self.g.sigmoid(&logits)?;
        self.note_gate(format!("{prefix}.gate"), &gate);
        self.g.mul(x, &gate)
    }

    /// `x * sigmoid(conv_k(pool_c(x)))`, gate broadcast over channels. With
    /// median pooling `pool_c` is the per-position channel median.
    pub fn spatial_attention(&mut self, prefix: &str, x: &G::Var) -> Result<G::Var> {
        let pooled = match self.config.spatial_pooling {
            SpatialPooling::Median => self.g.reduce_channels(x, ChannelReduce::Median)?,
            SpatialPooling::AvgMax => {
                let avg = self.g.reduce_channels(x, ChannelReduce::Mean)?;
                let max = self.g.reduce_channels(x, ChannelReduce::Max)?;
                self.g.concat_channels(&[avg, max])?
            }
        };
        let k = self.config.sa_kernel;
        let maps = self.config.spatial_pooling.maps();
        let logits = self.conv(&format!("{prefix}.conv"), maps, 1, k, &pooled)?;
        let gate = self.g.sigmoid(&logits)?;
        self.note_gate(format!("{prefix}.gate"), &gate);
        self.g.mul(x, &gate)
    }

    /// Dual attention unit: `x + conv1x1([CA(f), SA(f)])` with
    /// `f = conv(relu(conv(x)))`.
    pub fn dau(&mut self, prefix: &str, channels: usize, x: &G::Var) -> Result<G::Var> {
        self.expect_channels("dau", x, channels)?;
        let f = self.conv(&format!("{prefix}.conv_a"), channels, channels, 3, x)?;
        let f = self.g.relu(&f)?;
        let f = self.conv(&format!("{prefix}.conv_b"), channels, channels, 3, &f)?;
        let ca = self.channel_attention(&format!("{prefix}.ca"), channels, &f)?;
        let sa = self.spatial_attention(&format!("{prefix}.sa"), &f)?;
        let u = self.g.concat_channels(&[ca, sa])?;
        let r = self.conv(&format!("{prefix}.fuse"), 2 * channels, channels, 1, &u)?;
        self.g.add(x, &r)
    }

    /// Selective kernel feature fusion: per-channel softmax weights across
    /// branches, derived from the pooled sum of all branches.
    pub fn skff(&mut self, prefix: &str, channels: usize, branches: &[G::Var]) -> Result<G::Var> {
        if branches.len() < 2 {
            return Err(Error::Config(format!(
                "{prefix}: feature fusion needs >= 2 branches, got {}",
                branches.len()
            )));
        }
        let dims = self.g.value(&branches[0])?.dims();
        for b in &branches[1..] {
            let d = self.g.value(b)?.dims();
            if d != dims {
                return Err(Error::Shape {
                    op: "skff",
                    lhs: dims,
                    rhs: d,
                });
            }
        }
        self.expect_channels("skff", &branches[0], channels)?;

        let mut total = branches[0].clone();
        for b in &branches[1..] {
            total = self.g.add(&total, b)?;
        }
        let s = self.g.global_pool(&total, SpatialPool::Avg)?;
        let hidden = self.config.bottleneck(channels);
        let z = self.conv(&format!("{prefix}.squeeze"), channels, hidden, 1, &s)?;
        let z = self.g.relu(&z)?;
        let mut logits = Vec::with_capacity(branches.len());
        for i in 0..branches.len() {
            logits.push(self.conv(&format!("{prefix}.select{i}"), hidden, channels, 1, &z)?);
        }
        let weights = self.g.softmax_branches(&logits)?;
        let mut out: Option<G::Var> = None;
        for (i, (b, w)) in branches.iter().zip(&weights).enumerate() {
            self.note_gate(format!("{prefix}.weight{i}"), w);
            let term = self.g.mul(b, w)?;
            out = Some(match out {
                None => term,
                Some(acc) => self.g.add(&acc, &term)?,
            });
        }
        Ok(out.expect("at least two branches"))
    }

    /// Moves stream features from scale `from` to scale `to`: bilinear
    /// resampling followed by a 1x1 conv that adjusts the channel width.
    fn resample(&mut self, prefix: &str, x: &G::Var, from: usize, to: usize) -> Result<G::Var> {
        if from == to {
            return Ok(x.clone());
        }
        let mut y = x.clone();
        let mut steps = from.abs_diff(to);
        while steps > 0 {
            let (scale, used) = match (to > from, steps >= 2) {
                (true, true) => (Scale::QUARTER, 2),
                (true, false) => (Scale::HALF, 1),
                (false, true) => (Scale::QUADRUPLE, 2),
                (false, false) => (Scale::DOUBLE, 1),
            };
            y = self.g.resize(&y, scale)?;
            steps -= used;
        }
        let (cin, cout) = (self.config.channels_at(from), self.config.channels_at(to));
        self.conv(prefix, cin, cout, 1, &y)
    }

    fn check_resolution(&self, x: &G::Var) -> Result<()> {
        let [_, _, h, w] = self.g.value(x)?.dims();
        let d = self.config.divisor();
        if h % d != 0 || w % d != 0 || h == 0 || w == 0 {
            return Err(Error::Resolution {
                height: h,
                width: w,
                factor: d,
            });
        }
        Ok(())
    }

    /// Multi-scale residual block.
    ///
    /// Streams are formed by repeated halving (channels doubling). Each
    /// stream runs a DAU, every scale then fuses all streams resampled to it,
    /// each stream runs a second DAU, and a final fusion at full resolution
    /// feeds the residual conv.
    pub fn mrb(&mut self, prefix: &str, x: &G::Var) -> Result<G::Var> {
        self.check_resolution(x)?;
        let c0 = self.config.base_channels;
        self.expect_channels("mrb", x, c0)?;
        let n = self.config.n_scales;

        let mut streams = vec![x.clone()];
        for j in 1..n {
            let half = self.g.resize(&streams[j - 1], Scale::HALF)?;
            let (cin, cout) = (self.config.channels_at(j - 1), self.config.channels_at(j));
            streams.push(self.conv(&format!("{prefix}.down{j}"), cin, cout, 1, &half)?);
        }
        for (j, s) in streams.iter_mut().enumerate() {
            let c = self.config.channels_at(j);
            *s = self.dau(&format!("{prefix}.dau_a{j}"), c, s)?;
        }

        if n > 1 {
            let mut exchanged = Vec::with_capacity(n);
            for j in 0..n {
                let mut inputs = Vec::with_capacity(n);
                for (i, s) in streams.iter().enumerate() {
                    inputs.push(self.resample(&format!("{prefix}.to{j}.from{i}"), s, i, j)?);
                }
                let c = self.config.channels_at(j);
                exchanged.push(self.skff(&format!("{prefix}.skff{j}"), c, &inputs)?);
            }
            streams = exchanged;
        }
        for (j, s) in streams.iter_mut().enumerate() {
            let c = self.config.channels_at(j);
            *s = self.dau(&format!("{prefix}.dau_b{j}"), c, s)?;
        }

        let fused = if n > 1 {
            let mut inputs = Vec::with_capacity(n);
            for (i, s) in streams.iter().enumerate() {
                inputs.push(self.resample(&format!("{prefix}.out.from{i}"), s, i, 0)?);
            }
            self.skff(&format!("{prefix}.skff_out"), c0, &inputs)?
        } else {
            streams.pop().expect("one stream")
        };
        let r = self.conv(&format!("{prefix}.conv"), c0, c0, 3, &fused)?;
        self.g.add(x, &r)
    }

    /// Recursive residual group: MRBs, a conv, and a skip over the group.
    pub fn rrg(&mut self, prefix: &str, x: &G::Var) -> Result<G::Var> {
        let c = self.config.base_channels;
        let mut y = x.clone();
        for m in 0..self.config.n_mrb_per_rrg {
            y = self.mrb(&format!("{prefix}.mrb{m}"), &y)?;
        }
        let y = self.conv(&format!("{prefix}.conv"), c, c, 3, &y)?;
        self.g.add(x, &y)
    }

    /// Full enhancer: `clamp(image + conv_out(groups(conv_in(image))), 0, 1)`.
    pub fn forward(&mut self, image: &G::Var) -> Result<G::Var> {
        let channels = self.channels_of(image)?;
        if channels != 3 {
            let dims = self.g.value(image)?.dims();
            return Err(Error::Shape {
                op: "forward (expects RGB)",
                lhs: dims,
                rhs: [dims[0], 3, dims[2], dims[3]],
            });
        }
        self.check_resolution(image)?;
        let c = self.config.base_channels;
        let mut feat = self.conv("conv_in", 3, c, 3, image)?;
        for g in 0..self.config.n_rrg {
            feat = self.rrg(&format!("rrg{g}"), &feat)?;
        }
        let residual = self.conv("conv_out", c, 3, 3, &feat)?;
        let out = self.g.add(image, &residual)?;
        self.g.clamp(&out, 0.0, 1.0)
    }
}
