use drnet_tensor::ops::{self, Mode, RunningStats};
use drnet_tensor::{Parameter, Tensor};

use super::{level_factor, DepthDecoder, DepthLevel, DepthPyramid};
use crate::backbone::FeaturePyramid;
use crate::config::{BackboneConfig, DecoderConfig, DiagonalReading};
use crate::error::Result;
use crate::layers::{BatchNorm, Conv, ConvBnRelu, Module, SeededRng};

/// upII_5: linear 1x1 conv on upI_5 (= down_5), no normalization or activation.
pub fn initial_depth_head(head: &Conv, upi5: &Tensor) -> Result<Tensor> {
    head.forward(upi5)
}

#[derive(Clone, Debug)]
struct UpIStep {
    level: usize,
    block: ConvBnRelu,
}

impl UpIStep {
    /// conv1x1 -> bn -> relu -> pixel shuffle by the level factor.
    fn forward(&self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.block.forward(input, mode)?;
        Ok(ops::pixel_shuffle(&y, level_factor(self.level))?)
    }
}

#[derive(Clone, Debug)]
pub struct DrnetDecoder {
    config: DecoderConfig,
    /// upII_5 head; absent without the second branch
    head5: Option<Conv>,
    /// levels 4..=0
    upi: Vec<UpIStep>,
    /// levels 4..=0; empty without the second branch
    corr: Vec<Conv>,
    /// 1x1 head on upI_0 when the second branch is disabled
    head0: Option<Conv>,
}

impl DrnetDecoder {
    pub fn new(config: &DecoderConfig, backbone: &BackboneConfig, rng: &mut SeededRng) -> Result<Self> {
        let down_c = |level: usize| backbone.widths[level - 1];
        let head5 = match config.second_branch {
            true => Some(Conv::same("decoder.head5", down_c(5), 1, 1, true, rng)?),
            false => None,
        };

        let mut upi = Vec::with_capacity(5);
        let mut corr = Vec::with_capacity(5);
        let mut prev_width = down_c(5);
        for level in (0..5).rev() {
            let width = config.upi_width(level);
            let r = level_factor(level);
            let in_c = prev_width + usize::from(Self::upi_takes_depth(config));
            let prefix = format!("decoder.upI.{level}");
            upi.push(UpIStep {
                level,
                block: ConvBnRelu {
                    conv: Conv::same(&format!("{prefix}.conv"), in_c, width * r * r, 1, true, rng)?,
                    bn: BatchNorm::new(&format!("{prefix}.bn"), width * r * r)?,
                },
            });
            if config.second_branch {
                let down = if level > 0 { down_c(level) } else { 0 };
                let feed = if Self::correction_takes_upi(config) { width } else { 0 };
                let k = config.correction_kernel;
                corr.push(Conv::same(&format!("decoder.corr.{level}"), down + 1 + feed, 1, k, true, rng)?);
            }
            prev_width = width;
        }
        let head0 = if config.second_branch {
            None
        } else {
            Some(Conv::same("decoder.head0", prev_width, 1, 1, true, rng)?)
        };
        Ok(DrnetDecoder { config: config.clone(), head5, upi, corr, head0 })
    }

    fn upi_takes_depth(config: &DecoderConfig) -> bool {
        config.second_branch && config.diagonal_connections && config.diagonal_reading == DiagonalReading::CrossBranch
    }

    fn correction_takes_upi(config: &DecoderConfig) -> bool {
        match config.diagonal_reading {
            DiagonalReading::CrossBranch => true,
            DiagonalReading::CorrectionFeed => config.diagonal_connections,
        }
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn corrections_mut(&mut self) -> impl Iterator<Item = &mut Conv> {
        self.corr.iter_mut()
    }

    fn run(&self, features: &FeaturePyramid, mode: Mode) -> Result<DepthPyramid> {
        let mut upi = features.level(5).clone();
        if !self.config.second_branch {
            for step in &self.upi {
                upi = step.forward(&upi, mode)?;
            }
            let head = self.head0.as_ref().expect("head0 exists without second branch");
            return Ok(DepthPyramid::single(head.forward(&upi)?));
        }

        let head5 = self.head5.as_ref().expect("head5 exists with the second branch");
        let mut upii = initial_depth_head(head5, &upi)?;
        let mut levels = vec![DepthLevel { level: 5, map: upii.clone() }];
        for (step, corr) in self.upi.iter().zip(&self.corr) {
            let level = step.level;
            let upi_in = if Self::upi_takes_depth(&self.config) {
                ops::concat_channels(&[&upi, &upii])?
            } else {
                upi.clone()
            };
            upi = step.forward(&upi_in, mode)?;
            drop(upi_in);

            let up = ops::bilinear_upsample(&upii, level_factor(level))?;
            let correction = {
                let mut parts: Vec<&Tensor> = Vec::with_capacity(3);
                if level > 0 {
                    parts.push(features.level(level));
                }
                parts.push(&up);
                if Self::correction_takes_upi(&self.config) {
                    parts.push(&upi);
                }
                corr.forward(&ops::concat_channels(&parts)?)?
            };
            upii = ops::add(&up, &correction)?;
            levels.push(DepthLevel { level, map: upii.clone() });
        }
        Ok(DepthPyramid { levels })
    }
}

impl Module for DrnetDecoder {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter)) {
        if let Some(h) = &self.head5 {
            h.visit_params(f);
        }
        for s in &self.upi {
            s.block.visit_params(f);
        }
        self.corr.iter().for_each(|c| c.visit_params(f));
        if let Some(h) = &self.head0 {
            h.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        if let Some(h) = &mut self.head5 {
            h.visit_params_mut(f);
        }
        for s in &mut self.upi {
            s.block.visit_params_mut(f);
        }
        self.corr.iter_mut().for_each(|c| c.visit_params_mut(f));
        if let Some(h) = &mut self.head0 {
            h.visit_params_mut(f);
        }
    }

    fn visit_stats<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a RunningStats)) {
        for s in &self.upi {
            s.block.visit_stats(f);
        }
    }
}

impl DepthDecoder for DrnetDecoder {
    fn kind(&self) -> &'static str {
        "drnet"
    }

    fn forward(&self, features: &FeaturePyramid, mode: Mode) -> Result<DepthPyramid> {
        self.run(features, mode)
    }

    fn auxiliary_outputs(&self) -> bool {
        self.config.second_branch && self.config.auxiliary_outputs
    }

    fn box_clone(&self) -> Box<dyn DepthDecoder> {
        Box::new(self.clone())
    }
}
