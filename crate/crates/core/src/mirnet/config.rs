use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the spatial-attention branch summarizes channels before its conv.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpatialPooling {
    /// Channel-wise median, a single map.
    #[default]
    Median,
    /// Channel-wise mean and max maps, concatenated. Kept for comparisons.
    AvgMax,
}

impl SpatialPooling {
    pub(crate) fn code(self) -> u8 {
        match self {
            SpatialPooling::Median => 0,
            SpatialPooling::AvgMax => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SpatialPooling::Median),
            1 => Some(SpatialPooling::AvgMax),
            _ => None,
        }
    }

    /// Input channels of the spatial-attention conv.
    pub fn maps(self) -> usize {
        match self {
            SpatialPooling::Median => 1,
            SpatialPooling::AvgMax => 2,
        }
    }
}

/// Size knobs of the enhancer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Recursive residual groups.
    pub n_rrg: usize,
    pub n_mrb_per_rrg: usize,
    /// Parallel resolution streams inside each multi-scale residual block.
    pub n_scales: usize,
    pub base_channels: usize,
    /// Odd kernel size of the spatial-attention conv.
    pub sa_kernel: usize,
    /// Bottleneck ratio of channel attention and feature fusion.
    pub ca_reduction: usize,
    pub spatial_pooling: SpatialPooling,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl NetConfig {
    pub fn full() -> Self {
        Self {
            n_rrg: 3,
            n_mrb_per_rrg: 2,
            n_scales: 3,
            base_channels: 64,
            sa_kernel: 5,
            ca_reduction: 4,
            spatial_pooling: SpatialPooling::Median,
            seed: 0,
        }
    }

    /// Smallest configuration used throughout the test suite.
    pub fn test() -> Self {
        Self {
            n_rrg: 1,
            n_mrb_per_rrg: 1,
            n_scales: 2,
            base_channels: 8,
            ..Self::full()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_scales == 0 {
            return fail("n_scales must be >= 1".into());
        }
        if self.n_scales > 8 {
            return fail(format!("n_scales {} is unreasonably deep", self.n_scales));
        }
        if self.ca_reduction == 0 || self.base_channels < self.ca_reduction {
            return fail(format!(
                "base_channels ({}) must be >= ca_reduction ({}) and ca_reduction >= 1",
                self.base_channels, self.ca_reduction
            ));
        }
        if self.sa_kernel.is_multiple_of(2) {
            return fail(format!("sa_kernel must be odd, got {}", self.sa_kernel));
        }
        Ok(())
    }

    /// Channel width of stream `scale` (0 = full resolution).
    pub fn channels_at(&self, scale: usize) -> usize {
        self.base_channels << scale
    }

    /// Spatial dims must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << (self.n_scales - 1)
    }

    pub fn bottleneck(&self, channels: usize) -> usize {
        (channels / self.ca_reduction).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(NetConfig::full().validate().is_ok());
        assert!(NetConfig::test().validate().is_ok());
        let bad = NetConfig { sa_kernel: 4, ..NetConfig::test() };
        assert!(bad.validate().is_err());
        let bad = NetConfig { n_scales: 0, ..NetConfig::test() };
        assert!(bad.validate().is_err());
        let bad = NetConfig { base_channels: 2, ca_reduction: 4, ..NetConfig::test() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn widths_double_per_scale() {
        let c = NetConfig::full();
        assert_eq!(c.channels_at(0), 64);
        assert_eq!(c.channels_at(2), 256);
        assert_eq!(c.divisor(), 4);
    }
}
