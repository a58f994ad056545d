use drnet_tensor::ops::{self, Mode, RunningStats};
use drnet_tensor::{Parameter, Tensor};

use super::{level_scale, DepthDecoder, DepthPyramid};
use crate::backbone::FeaturePyramid;
use crate::config::BackboneConfig;
use crate::error::Result;
use crate::layers::{Conv, Module, SeededRng};

/// Upsamples every backbone map to input size, concatenates, and applies a
/// single 1x1 head.
#[derive(Clone, Debug)]
pub struct FullResDecoder {
    head: Conv,
}

impl FullResDecoder {
    pub fn new(backbone: &BackboneConfig, rng: &mut SeededRng) -> Result<Self> {
        let channels = backbone.widths.iter().sum();
        Ok(FullResDecoder { head: Conv::same("decoder.head", channels, 1, 1, true, rng)? })
    }

    /// x2 steps until the remaining ratio is 4, then one x4 step.
    pub fn resize(x: &Tensor, scale: usize) -> Result<Tensor> {
        let mut y = x.clone();
        let mut left = scale;
        while left > 4 {
            y = ops::bilinear_upsample(&y, 2)?;
            left /= 2;
        }
        Ok(ops::bilinear_upsample(&y, left)?)
    }
}

impl Module for FullResDecoder {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter)) {
        self.head.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.head.visit_params_mut(f);
    }

    fn visit_stats<'a>(&'a self, _f: &mut dyn FnMut(&'a str, &'a RunningStats)) {}
}

impl DepthDecoder for FullResDecoder {
    fn kind(&self) -> &'static str {
        "fullres"
    }

    fn forward(&self, features: &FeaturePyramid, _mode: Mode) -> Result<DepthPyramid> {
        let maps = (1..=5)
            .map(|i| FullResDecoder::resize(features.level(i), level_scale(i)))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor> = maps.iter().collect();
        let cat = ops::concat_channels(&refs)?;
        drop(maps);
        Ok(DepthPyramid::single(self.head.forward(&cat)?))
    }

    fn box_clone(&self) -> Box<dyn DepthDecoder> {
        Box::new(self.clone())
    }
}
