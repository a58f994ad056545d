//! Parameterized building blocks shared by the backbone and the decoders.

use drnet_tensor::ops::{self, Mode, RunningStats};
use drnet_tensor::{Parameter, Real, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::error::Result;

/// Seeded generator used for parameter init, shuffling and scene synthesis.
///
/// SplitMix64: `state += 0x9E3779B97F4A7C15; z = state;
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9; z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
/// return z ^ (z >> 31)`.
pub type SeededRng = SplitMix64;

pub fn seeded(seed: u64) -> SeededRng {
    SplitMix64::seed_from_u64(seed)
}

/// Independent sub-stream seed, e.g. one per model part or per epoch.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Read/write access to every parameter and running-statistics buffer of a
/// module, in a fixed order.
pub trait Module {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter));
    fn visit_stats<'a>(&'a self, _f: &mut dyn FnMut(&'a str, &'a RunningStats)) {}

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.numel());
        n
    }
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: Parameter,
    pub bias: Option<Parameter>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    /// Square `k x k` convolution with fan-in-scaled uniform init:
    /// weights and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        prefix: &str,
        ci: usize,
        co: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let bound = 1.0 / ((ci * k * k) as Real).sqrt();
        let w = (0..co * ci * k * k).map(|_| rng.gen_range(-bound..bound)).collect();
        let weight = Parameter::new(format!("{prefix}.weight"), Shape::new(co, ci, k, k), vec![co, ci, k, k], w)?;
        let bias = if bias {
            let b = (0..co).map(|_| rng.gen_range(-bound..bound)).collect();
            Some(Parameter::new(format!("{prefix}.bias"), Shape::vector(co), vec![co], b)?)
        } else {
            None
        };
        Ok(Conv { weight, bias, stride, pad })
    }

    /// Same-padding convolution (`pad = (k - 1) / 2`, stride 1).
    pub fn same(prefix: &str, ci: usize, co: usize, k: usize, bias: bool, rng: &mut SeededRng) -> Result<Self> {
        Conv::new(prefix, ci, co, k, 1, (k - 1) / 2, bias, rng)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let bias = self.bias.as_ref().map(|b| b.tensor());
        Ok(ops::conv2d(x, self.weight.tensor(), bias, self.stride, self.pad)?)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }
}

impl Module for Conv {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

pub const BN_EPS: Real = 1e-5;
pub const BN_MOMENTUM: Real = 0.1;

#[derive(Clone, Debug)]
pub struct BatchNorm {
    prefix: String,
    pub gamma: Parameter,
    pub beta: Parameter,
    pub stats: RunningStats,
}

impl BatchNorm {
    pub fn new(prefix: &str, c: usize) -> Result<Self> {
        Ok(BatchNorm {
            prefix: prefix.to_string(),
            gamma: Parameter::new(format!("{prefix}.gamma"), Shape::vector(c), vec![c], vec![1.0; c])?,
            beta: Parameter::new(format!("{prefix}.beta"), Shape::vector(c), vec![c], vec![0.0; c])?,
            stats: RunningStats::new(c),
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        Ok(ops::batchnorm2d(x, self.gamma.tensor(), self.beta.tensor(), &self.stats, mode, BN_EPS, BN_MOMENTUM)?)
    }
}

impl Module for BatchNorm {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter)) {
        f(&self.gamma);
        f(&self.beta);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    fn visit_stats<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a RunningStats)) {
        f(&self.prefix, &self.stats);
    }
}

/// conv -> batchnorm -> relu.
#[derive(Clone, Debug)]
pub struct ConvBnRelu {
    pub conv: Conv,
    pub bn: BatchNorm,
}

impl ConvBnRelu {
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        Ok(ops::relu(&self.bn.forward(&self.conv.forward(x)?, mode)?))
    }
}

impl Module for ConvBnRelu {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter)) {
        self.conv.visit_params(f);
        self.bn.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.conv.visit_params_mut(f);
        self.bn.visit_params_mut(f);
    }

    fn visit_stats<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a RunningStats)) {
        self.bn.visit_stats(f);
    }
}
