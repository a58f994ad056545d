//! Backbone plus a registry-selected decoder.

use drnet_tensor::ops::{Mode, RunningStats};
use drnet_tensor::{no_grad, Parameter, Tensor};

use crate::backbone::{Backbone, FeaturePyramid};
use crate::config::{BackboneConfig, DecoderConfig};
use crate::decoder::{DecoderRegistry, DepthDecoder, DepthPyramid};
use crate::error::Result;
use crate::layers::{derive_seed, seeded, Module};

const BACKBONE_STREAM: u64 = 1;
const DECODER_STREAM: u64 = 2;

#[derive(Clone)]
pub struct DepthModel {
    pub backbone: Backbone,
    pub decoder: Box<dyn DepthDecoder>,
}

impl DepthModel {
    /// Backbone and decoder draw from separate seed streams, so two models
    /// built with the same seed share backbone weights whatever their decoder.
    pub fn new(backbone: &BackboneConfig, decoder: &DecoderConfig, seed: u64) -> Result<Self> {
        Self::with_registry(&DecoderRegistry::with_builtins(), backbone, decoder, seed)
    }

    pub fn with_registry(
        registry: &DecoderRegistry,
        backbone: &BackboneConfig,
        decoder: &DecoderConfig,
        seed: u64,
    ) -> Result<Self> {
        let bb = Backbone::new(backbone, &mut seeded(derive_seed(seed, BACKBONE_STREAM)))?;
        let dec = registry.build(&decoder.kind, decoder, backbone, &mut seeded(derive_seed(seed, DECODER_STREAM)))?;
        Ok(DepthModel { backbone: bb, decoder: dec })
    }

    /// Backbone features. With `frozen_backbone` the backbone runs in eval mode
    /// without recording a graph.
    pub fn features(&self, img: &Tensor, mode: Mode, frozen_backbone: bool) -> Result<FeaturePyramid> {
        if frozen_backbone {
            no_grad(|| self.backbone.forward(img, Mode::Eval))
        } else {
            self.backbone.forward(img, mode)
        }
    }

    pub fn forward(&self, img: &Tensor, mode: Mode) -> Result<DepthPyramid> {
        self.forward_with(img, mode, false)
    }

    pub fn forward_with(&self, img: &Tensor, mode: Mode, frozen_backbone: bool) -> Result<DepthPyramid> {
        let features = self.features(img, mode, frozen_backbone)?;
        self.decoder.forward(&features, mode)
    }

    /// Eval-mode, gradient-free full-resolution prediction.
    pub fn predict(&self, img: &Tensor) -> Result<Tensor> {
        no_grad(|| Ok(self.forward(img, Mode::Eval)?.finest().clone()))
    }

    pub fn is_backbone_param(name: &str) -> bool {
        name.starts_with("backbone.")
    }
}

impl Module for DepthModel {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter)) {
        self.backbone.visit_params(f);
        self.decoder.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.backbone.visit_params_mut(f);
        self.decoder.visit_params_mut(f);
    }

    fn visit_stats<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a RunningStats)) {
        self.backbone.visit_stats(f);
        self.decoder.visit_stats(f);
    }
}
