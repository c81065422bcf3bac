//! Excitation layers: two small convolutions over the pooled descriptor grid,
//! `C → ⌈C/r⌉ → C`, with a ReLU between and a sigmoid after.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{conv_grid, pointwise, Activation, GridConv, Tensor4D};

/// Excitation hyper-parameters, written `c{kx}x{ky}:r{r}` (e.g. `c3x1:r4`).
/// Leaving the ratio out (`c1x1`) means "whatever the network natively uses",
/// which only the cost model can resolve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ExciteConfig {
    pub reduction_ratio: Option<usize>,
    /// Kernel extent `(kx, ky)` along (height, width). Both odd.
    pub kernel: (usize, usize),
}

impl Default for ExciteConfig {
    fn default() -> Self {
        Self {
            reduction_ratio: None,
            kernel: (1, 1),
        }
    }
}

impl ExciteConfig {
    pub fn new(reduction_ratio: usize, kernel: (usize, usize)) -> Result<Self> {
        let conf = Self {
            reduction_ratio: Some(reduction_ratio),
            kernel,
        };
        conf.validate()?;
        Ok(conf)
    }

    /// The original SE excitation: 1×1 kernels with ratio `r`.
    pub fn se(reduction_ratio: usize) -> Self {
        Self {
            reduction_ratio: Some(reduction_ratio),
            kernel: (1, 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reduction_ratio == Some(0) {
            return Err(Error::invalid("reduction ratio must be positive"));
        }
        let (kx, ky) = self.kernel;
        if kx % 2 == 0 || ky % 2 == 0 {
            return Err(Error::invalid(format!("excite kernel must be odd, got {kx}x{ky}")));
        }
        Ok(())
    }

    pub fn kernel_area(&self) -> usize {
        self.kernel.0 * self.kernel.1
    }

    /// Ratio to use, falling back to `native` when none is configured.
    pub fn ratio_or(&self, native: usize) -> usize {
        self.reduction_ratio.unwrap_or(native)
    }
}

/// Bottleneck width `⌈base / r⌉`.
pub fn reduced_width(base: usize, r: usize) -> usize {
    base.div_ceil(r)
}

impl fmt::Display for ExciteConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}x{}", self.kernel.0, self.kernel.1)?;
        if let Some(r) = self.reduction_ratio {
            write!(f, ":r{r}")?;
        }
        Ok(())
    }
}

impl FromStr for ExciteConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unrecognised excite spec `{s}` (expected e.g. c1x1:r4)"));
        let mut parts = s.trim().split(':');
        let kernel = parts.next().and_then(|k| k.strip_prefix('c')).ok_or_else(bad)?;
        let (kx, ky) = kernel.split_once('x').ok_or_else(bad)?;
        let kernel = (kx.parse().map_err(|_| bad())?, ky.parse().map_err(|_| bad())?);
        let reduction_ratio = match parts.next() {
            None => None,
            Some(r) => Some(r.strip_prefix('r').and_then(|r| r.parse().ok()).ok_or_else(bad)?),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        let conf = Self {
            reduction_ratio,
            kernel,
        };
        conf.validate()?;
        Ok(conf)
    }
}

impl Serialize for ExciteConfig {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExciteConfig {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parameters of the two excitation convolutions.
#[derive(Clone, Debug, PartialEq)]
pub struct ExciteWeights {
    reduce: GridConv,
    expand: GridConv,
}

impl ExciteWeights {
    pub fn new(reduce: GridConv, expand: GridConv) -> Result<Self> {
        if reduce.c_out() != expand.c_in() || reduce.c_in() != expand.c_out() {
            return Err(Error::invalid(format!(
                "excite layers disagree: reduce {}→{}, expand {}→{}",
                reduce.c_in(),
                reduce.c_out(),
                expand.c_in(),
                expand.c_out()
            )));
        }
        if reduce.kernel() != expand.kernel() {
            return Err(Error::invalid("excite layers must share one kernel size"));
        }
        Ok(Self { reduce, expand })
    }

    /// Assembles weights from raw buffers in `(w1, b1, w2, b2)` order.
    pub fn from_parts(
        channels: usize,
        reduced: usize,
        kernel: (usize, usize),
        w1: Vec<f32>,
        b1: Vec<f32>,
        w2: Vec<f32>,
        b2: Vec<f32>,
    ) -> Result<Self> {
        Self::new(
            GridConv::new(reduced, channels, kernel, w1, b1)?,
            GridConv::new(channels, reduced, kernel, w2, b2)?,
        )
    }

    pub fn zeros(channels: usize, conf: &ExciteConfig) -> Result<Self> {
        let (c, m, k) = Self::layout(channels, conf)?;
        Self::from_parts(
            c,
            m,
            conf.kernel,
            vec![0.0; m * c * k],
            vec![0.0; m],
            vec![0.0; c * m * k],
            vec![0.0; c],
        )
    }

    /// Uniform fan-in scaled init, `U(-b, b)` with `b = sqrt(6 / fan_in)`;
    /// biases start at zero.
    pub fn kaiming_uniform<R: Rng + ?Sized>(channels: usize, conf: &ExciteConfig, rng: &mut R) -> Result<Self> {
        let (c, m, k) = Self::layout(channels, conf)?;
        let mut draw = |fan_in: usize, len: usize| -> Vec<f32> {
            let bound = (6.0 / fan_in as f64).sqrt() as f32;
            (0..len).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let w1 = draw(c * k, m * c * k);
        let w2 = draw(m * k, c * m * k);
        Self::from_parts(c, m, conf.kernel, w1, vec![0.0; m], w2, vec![0.0; c])
    }

    fn layout(channels: usize, conf: &ExciteConfig) -> Result<(usize, usize, usize)> {
        conf.validate()?;
        let r = conf
            .reduction_ratio
            .ok_or_else(|| Error::invalid("weights need an explicit reduction ratio"))?;
        if channels == 0 {
            return Err(Error::invalid("channel count must be positive"));
        }
        Ok((channels, reduced_width(channels, r), conf.kernel_area()))
    }

    pub fn channels(&self) -> usize {
        self.reduce.c_in()
    }

    pub fn reduced(&self) -> usize {
        self.reduce.c_out()
    }

    pub fn kernel(&self) -> (usize, usize) {
        self.reduce.kernel()
    }

    pub fn reduce(&self) -> &GridConv {
        &self.reduce
    }

    pub fn expand(&self) -> &GridConv {
        &self.expand
    }

    pub fn param_count(&self) -> usize {
        self.reduce.param_count() + self.expand.param_count()
    }

    /// Checks that `conf` describes these weights.
    pub fn check_config(&self, conf: &ExciteConfig) -> Result<()> {
        conf.validate()?;
        if conf.kernel != self.kernel() {
            return Err(Error::invalid(format!(
                "config kernel {:?} does not match weight kernel {:?}",
                conf.kernel,
                self.kernel()
            )));
        }
        if let Some(r) = conf.reduction_ratio {
            if reduced_width(self.channels(), r) != self.reduced() {
                return Err(Error::invalid(format!(
                    "ratio r{r} implies {} reduced channels, weights have {}",
                    reduced_width(self.channels(), r),
                    self.reduced()
                )));
            }
        }
        Ok(())
    }

    /// `σ(W2 · ReLU(W1 · d + b1) + b2)` over a descriptor grid.
    pub fn excite(&self, descriptors: &Tensor4D) -> Result<Tensor4D> {
        let hidden = pointwise(&conv_grid(descriptors, &self.reduce)?, Activation::Relu);
        Ok(pointwise(&conv_grid(&hidden, &self.expand)?, Activation::Sigmoid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parse_excite_specs() {
        let c: ExciteConfig = "c1x1:r4".parse().unwrap();
        assert_eq!(c, ExciteConfig::se(4));
        let c: ExciteConfig = "c3x1:r2".parse().unwrap();
        assert_eq!(c.kernel, (3, 1));
        assert_eq!(c.reduction_ratio, Some(2));
        let c: ExciteConfig = "c1x1".parse().unwrap();
        assert_eq!(c.reduction_ratio, None);
        assert_eq!(c.to_string(), "c1x1");
        for bad in ["", "c2x1:r4", "c1x1:r0", "1x1:r4", "c1x1:4", "c1x1:r4:x"] {
            assert!(bad.parse::<ExciteConfig>().is_err(), "{bad}");
        }
    }

    #[test]
    fn non_divisible_channels_round_up() {
        let w = ExciteWeights::zeros(10, &ExciteConfig::se(4)).unwrap();
        assert_eq!(w.reduced(), 3);
        assert_eq!(w.param_count(), 10 * 3 + 3 + 3 * 10 + 10);
    }

    #[test]
    fn kaiming_bounds_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = ExciteWeights::kaiming_uniform(16, &ExciteConfig::se(4), &mut rng).unwrap();
        let b1 = (6.0f32 / 16.0).sqrt();
        assert!(w.reduce().weight().iter().all(|v| v.abs() <= b1));
        assert!(w.reduce().bias().iter().all(|&v| v == 0.0));
        assert!(w.expand().bias().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn check_config_catches_mismatch() {
        let w = ExciteWeights::zeros(16, &ExciteConfig::se(4)).unwrap();
        assert!(w.check_config(&ExciteConfig::se(4)).is_ok());
        assert!(w.check_config(&"c1x1".parse().unwrap()).is_ok());
        assert!(w.check_config(&ExciteConfig::se(2)).is_err());
        assert!(w.check_config(&"c3x1:r4".parse().unwrap()).is_err());
    }

    #[test]
    fn mismatched_layers_rejected() {
        let a = GridConv::new(4, 16, (1, 1), vec![0.0; 64], vec![0.0; 4]).unwrap();
        let b = GridConv::new(16, 2, (1, 1), vec![0.0; 32], vec![0.0; 16]).unwrap();
        assert!(ExciteWeights::new(a, b).is_err());
    }
}
