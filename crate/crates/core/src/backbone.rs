//! Micro residual encoder with the standard five-stage geometry: down_1..down_5
//! at 1/4, 1/4, 1/8, 1/16 and 1/32 of the input.

use drnet_tensor::ops::{self, Mode, RunningStats};
use drnet_tensor::{Parameter, Tensor};

use crate::config::BackboneConfig;
use crate::error::{DrnetError, Result};
use crate::layers::{BatchNorm, Conv, ConvBnRelu, Module, SeededRng};

/// Backbone outputs down_1..down_5 plus the input size they came from.
#[derive(Clone, Debug)]
pub struct FeaturePyramid {
    pub down: [Tensor; 5],
    pub input_hw: (usize, usize),
}

impl FeaturePyramid {
    /// down_i for i in 1..=5.
    pub fn level(&self, i: usize) -> &Tensor {
        &self.down[i - 1]
    }
}

pub fn check_divisible(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
        return Err(DrnetError::Divisibility { h, w });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ResidualBlock {
    conv1: Conv,
    bn1: BatchNorm,
    conv2: Conv,
    bn2: BatchNorm,
    shortcut: Option<Conv>,
}

impl ResidualBlock {
    pub fn new(prefix: &str, ci: usize, co: usize, stride: usize, rng: &mut SeededRng) -> Result<Self> {
        let shortcut = if stride != 1 || ci != co {
            Some(Conv::new(&format!("{prefix}.shortcut"), ci, co, 1, stride, 0, false, rng)?)
        } else {
            None
        };
        Ok(ResidualBlock {
            conv1: Conv::new(&format!("{prefix}.conv1"), ci, co, 3, stride, 1, false, rng)?,
            bn1: BatchNorm::new(&format!("{prefix}.bn1"), co)?,
            conv2: Conv::new(&format!("{prefix}.conv2"), co, co, 3, 1, 1, false, rng)?,
            bn2: BatchNorm::new(&format!("{prefix}.bn2"), co)?,
            shortcut,
        })
    }

    /// `relu(bn(conv3x3(relu(bn(conv3x3(x, stride))))) + shortcut(x))`
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = ops::relu(&self.bn1.forward(&self.conv1.forward(x)?, mode)?);
        let y = self.bn2.forward(&self.conv2.forward(&y)?, mode)?;
        let skip = match &self.shortcut {
            Some(conv) => conv.forward(x)?,
            None => x.clone(),
        };
        Ok(ops::relu(&ops::add(&y, &skip)?))
    }

    pub fn conv_weights_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.conv1.weight, &mut self.conv2.weight]
    }
}

impl Module for ResidualBlock {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter)) {
        self.conv1.visit_params(f);
        self.bn1.visit_params(f);
        self.conv2.visit_params(f);
        self.bn2.visit_params(f);
        if let Some(s) = &self.shortcut {
            s.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.conv1.visit_params_mut(f);
        self.bn1.visit_params_mut(f);
        self.conv2.visit_params_mut(f);
        self.bn2.visit_params_mut(f);
        if let Some(s) = &mut self.shortcut {
            s.visit_params_mut(f);
        }
    }

    fn visit_stats<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a RunningStats)) {
        self.bn1.visit_stats(f);
        self.bn2.visit_stats(f);
    }
}

#[derive(Clone, Debug)]
pub struct Backbone {
    config: BackboneConfig,
    /// layer0: conv7x7/2 -> bn -> relu, followed by maxpool3x3/2.
    stem: ConvBnRelu,
    /// layer1..layer4
    layers: Vec<Vec<ResidualBlock>>,
}

impl Backbone {
    pub fn new(config: &BackboneConfig, rng: &mut SeededRng) -> Result<Self> {
        let w = config.widths;
        let stem = ConvBnRelu {
            conv: Conv::new("backbone.layer0.conv", 3, w[0], 7, 2, 3, false, rng)?,
            bn: BatchNorm::new("backbone.layer0.bn", w[0])?,
        };
        let mut layers = Vec::with_capacity(4);
        for l in 0..4 {
            let (ci, co) = (w[l], w[l + 1]);
            let first_stride = if l == 0 { 1 } else { 2 };
            let blocks = (0..config.blocks_per_layer[l])
                .map(|b| {
                    let prefix = format!("backbone.layer{}.{b}", l + 1);
                    if b == 0 {
                        ResidualBlock::new(&prefix, ci, co, first_stride, rng)
                    } else {
                        ResidualBlock::new(&prefix, co, co, 1, rng)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            layers.push(blocks);
        }
        Ok(Backbone { config: config.clone(), stem, layers })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    /// RGB in [0, 1] -> (x - 0.5) / 0.5.
    pub fn normalize(img: &Tensor) -> Tensor {
        ops::add_scalar(&ops::mul_scalar(img, 2.0), -1.0)
    }

    pub fn forward(&self, img: &Tensor, mode: Mode) -> Result<FeaturePyramid> {
        let s = img.shape();
        if s.c != 3 {
            return Err(drnet_tensor::TensorError::Dimension { op: "backbone", axis: "channel", expected: 3, actual: s.c }.into());
        }
        check_divisible(s.h, s.w)?;
        let x = Backbone::normalize(img);
        let x = self.stem.forward(&x, mode)?;
        let mut x = ops::maxpool2d(&x, 3, 2, 1)?;
        let mut down = Vec::with_capacity(5);
        down.push(x.clone());
        for blocks in &self.layers {
            for block in blocks {
                x = block.forward(&x, mode)?;
            }
            down.push(x.clone());
        }
        let down: [Tensor; 5] = down.try_into().expect("five stages");
        Ok(FeaturePyramid { down, input_hw: (s.h, s.w) })
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut ResidualBlock> {
        self.layers.iter_mut().flatten()
    }
}

impl Module for Backbone {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter)) {
        self.stem.visit_params(f);
        self.layers.iter().flatten().for_each(|b| b.visit_params(f));
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.stem.visit_params_mut(f);
        self.layers.iter_mut().flatten().for_each(|b| b.visit_params_mut(f));
    }

    fn visit_stats<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a RunningStats)) {
        self.stem.visit_stats(f);
        self.layers.iter().flatten().for_each(|b| b.visit_stats(f));
    }
}
