//! Learnable parameters, deterministic initialization and the checkpoint
//! file format.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "NSMIRNET"
//! version    u32      1
//! config     u32 x 6  n_rrg, n_mrb_per_rrg, n_scales, base_channels, sa_kernel, ca_reduction
//!            u8       spatial pooling (0 = median, 1 = avg+max)
//!            u64      seed
//! count      u32
//! count x    u32 path length, UTF-8 path, u32 x 4 dims, f64 values
//! ```
//!
//! Records are written in lexicographic path order.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Eval, Graph};
use crate::mirnet::config::{NetConfig, SpatialPooling};
use crate::mirnet::net::Net;
use crate::tensor::{numel, Dims, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NSMIRNET";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: NetConfig,
    tensors: BTreeMap<String, Tensor>,
}

/// Every parameter path and its dims for `config`, in path order.
pub fn layout(config: &NetConfig) -> Result<Vec<(String, Dims)>> {
    config.validate()?;
    let d = config.divisor();
    let mut g = Eval;
    let mut net = Net::discover(&mut g, *config);
    let image = net.g.input(Tensor::zeros([1, 3, d, d]));
    net.forward(&image)?;
    let mut found = net.discovered();
    found.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(found)
}

/// 64-bit FNV-1a, used to give each parameter path its own stream.
pub(crate) fn path_hash(path: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in path.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl ModelParams {
    /// Fan-in scaled uniform weights in `±1/sqrt(fan_in)`, zero biases.
    ///
    /// Each tensor draws from a ChaCha stream keyed by `seed ^ hash(path)`,
    /// so values do not depend on iteration order.
    pub fn init(config: &NetConfig) -> Result<Self> {
        let mut tensors = BTreeMap::new();
        for (path, dims) in layout(config)? {
            let t = if path.ends_with(".bias") {
                Tensor::zeros(dims)
            } else {
                let fan_in = dims[1] * dims[2] * dims[3];
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ path_hash(&path));
                Tensor::from_fn(dims, |_, _, _, _| rng.gen_range(-bound..bound))
            };
            tensors.insert(path, t);
        }
        Ok(Self {
            config: *config,
            tensors,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn get(&self, path: &str) -> Option<&Tensor> {
        self.tensors.get(path)
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Replaces every tensor whose path starts with `prefix` by zeros.
    pub fn zero_prefix(&mut self, prefix: &str) -> usize {
        let mut hits = 0;
        for (path, t) in self.tensors.iter_mut() {
            if path.starts_with(prefix) {
                t.data_mut().fill(0.0);
                hits += 1;
            }
        }
        hits
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [
            c.n_rrg,
            c.n_mrb_per_rrg,
            c.n_scales,
            c.base_channels,
            c.sa_kernel,
            c.ca_reduction,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.push(c.spatial_pooling.code());
        out.extend_from_slice(&c.seed.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (path, t) in &self.tensors {
            out.extend_from_slice(&(path.len() as u32).to_le_bytes());
            out.extend_from_slice(path.as_bytes());
            for d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "not a checkpoint (bad magic)".into(),
            });
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Unsupported(format!("checkpoint version {version}")));
        }
        let mut fields = [0usize; 6];
        for f in fields.iter_mut() {
            *f = r.u32()? as usize;
        }
        let pool_at = r.pos;
        let spatial_pooling = SpatialPooling::from_code(r.take(1)?[0]).ok_or(Error::Format {
            offset: pool_at,
            message: "unknown spatial pooling code".into(),
        })?;
        let seed = r.u64()?;
        let config = NetConfig {
            n_rrg: fields[0],
            n_mrb_per_rrg: fields[1],
            n_scales: fields[2],
            base_channels: fields[3],
            sa_kernel: fields[4],
            ca_reduction: fields[5],
            spatial_pooling,
            seed,
        };
        config.validate()?;

        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let at = r.pos;
            let path = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format {
                    offset: at,
                    message: "parameter path is not UTF-8".into(),
                })?
                .to_string();
            let mut dims = [0usize; 4];
            for d in dims.iter_mut() {
                *d = r.u32()? as usize;
            }
            let raw = r.take(numel(dims) * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let at = r.pos;
            if tensors.insert(path.clone(), Tensor::new(dims, data)?).is_some() {
                return Err(Error::Format {
                    offset: at,
                    message: format!("duplicate parameter `{path}`"),
                });
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos,
                message: "trailing bytes after last record".into(),
            });
        }

        let params = Self { config, tensors };
        params.check_layout()?;
        Ok(params)
    }

    /// Verifies that the tensors are exactly those `config` calls for.
    pub fn check_layout(&self) -> Result<()> {
        let expected: BTreeMap<String, Dims> = layout(&self.config)?.into_iter().collect();
        for (path, dims) in &expected {
            let found = self.tensors.get(path).map(Tensor::dims);
            if found != Some(*dims) {
                return Err(Error::CheckpointMismatch {
                    path: path.clone(),
                    expected: Some(*dims),
                    found,
                });
            }
        }
        if let Some((path, t)) = self.tensors.iter().find(|(p, _)| !expected.contains_key(*p)) {
            return Err(Error::CheckpointMismatch {
                path: path.clone(),
                expected: None,
                found: Some(t.dims()),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos,
                message: format!("truncated: need {n} more bytes"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
