//! Depth decoders behind a common trait, selected by name at runtime.
//!
//! Two decoders ship by default:
//!
//! * `drnet`: the double refinement decoder. A feature branch (upI) grows
//!   the coarsest backbone features back to input resolution with 1x1 conv,
//!   batchnorm, ReLU and pixel shuffle, while a depth branch (upII) starts
//!   from a 1x1 head on down_5 and at every level adds a learned correction
//!   to the bilinearly upsampled previous estimate.
//! * `fullres`: the baseline that bilinearly resizes every backbone map to
//!   input size, concatenates them and applies a 1x1 head.

mod drnet;
mod fullres;

use drnet_tensor::ops::{Mode, RunningStats};
use drnet_tensor::{Parameter, Tensor};

pub use drnet::{initial_depth_head, DrnetDecoder};
pub use fullres::FullResDecoder;

use crate::backbone::FeaturePyramid;
use crate::config::{BackboneConfig, DecoderConfig};
use crate::error::{DrnetError, Result};
use crate::layers::{Module, SeededRng};

/// Upsampling factor of the transition into `level`: both the pixel-shuffle
/// factor of upI_level and the bilinear factor applied to upII_{level+1}.
pub const fn level_factor(level: usize) -> usize {
    match level {
        1 => 1,
        0 => 4,
        _ => 2,
    }
}

/// Downsampling of `level` relative to the input (level 0 is full size).
pub const fn level_scale(level: usize) -> usize {
    match level {
        0 => 1,
        1 | 2 => 4,
        3 => 8,
        4 => 16,
        _ => 32,
    }
}

#[derive(Clone, Debug)]
pub struct DepthLevel {
    pub level: usize,
    pub map: Tensor,
}

/// Depth maps produced by a decoder, coarsest first. Single-output decoders
/// hold only level 0.
#[derive(Clone, Debug)]
pub struct DepthPyramid {
    pub levels: Vec<DepthLevel>,
}

impl DepthPyramid {
    pub fn single(map: Tensor) -> Self {
        DepthPyramid { levels: vec![DepthLevel { level: 0, map }] }
    }

    pub fn get(&self, level: usize) -> Option<&Tensor> {
        self.levels.iter().find(|l| l.level == level).map(|l| &l.map)
    }

    /// Full-resolution prediction.
    pub fn finest(&self) -> &Tensor {
        &self.levels.last().expect("pyramid is never empty").map
    }

    pub fn sizes(&self) -> Vec<(usize, usize)> {
        self.levels.iter().map(|l| (l.map.shape().h, l.map.shape().w)).collect()
    }
}

/// A decoder mapping backbone features to a depth pyramid.
pub trait DepthDecoder: Module + Send + Sync {
    /// Registry name.
    fn kind(&self) -> &'static str;

    fn forward(&self, features: &FeaturePyramid, mode: Mode) -> Result<DepthPyramid>;

    /// Whether the training loss should use every pyramid level.
    fn auxiliary_outputs(&self) -> bool {
        false
    }

    fn box_clone(&self) -> Box<dyn DepthDecoder>;
}

impl Clone for Box<dyn DepthDecoder> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

impl Module for Box<dyn DepthDecoder> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter)) {
        (**self).visit_params(f)
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        (**self).visit_params_mut(f)
    }

    fn visit_stats<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a RunningStats)) {
        (**self).visit_stats(f)
    }
}

pub type DecoderCtor = fn(&DecoderConfig, &BackboneConfig, &mut SeededRng) -> Result<Box<dyn DepthDecoder>>;

/// Name -> constructor table for decoders.
pub struct DecoderRegistry {
    entries: Vec<(&'static str, DecoderCtor)>,
}

impl DecoderRegistry {
    pub fn empty() -> Self {
        DecoderRegistry { entries: Vec::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = DecoderRegistry::empty();
        r.register("drnet", |d, b, rng| Ok(Box::new(DrnetDecoder::new(d, b, rng)?)));
        r.register("fullres", |_, b, rng| Ok(Box::new(FullResDecoder::new(b, rng)?)));
        r
    }

    /// Adds or replaces a constructor.
    pub fn register(&mut self, name: &'static str, ctor: DecoderCtor) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = ctor,
            None => self.entries.push((name, ctor)),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| *n == name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn build(
        &self,
        name: &str,
        decoder: &DecoderConfig,
        backbone: &BackboneConfig,
        rng: &mut SeededRng,
    ) -> Result<Box<dyn DepthDecoder>> {
        let (_, ctor) = self
            .entries
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| DrnetError::UnknownDecoder(name.to_string()))?;
        ctor(decoder, backbone, rng)
    }
}
