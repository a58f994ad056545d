//! Run configuration: one JSON document with `backbone`, `decoder`, `loss`,
//! `train` and `data` sections. Every field is optional; unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::DecoderRegistry;
use crate::error::{DrnetError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    /// Channels of down_1..down_5.
    pub widths: [usize; 5],
    /// Residual blocks in layers 1-4.
    pub blocks_per_layer: [usize; 4],
    /// Keep backbone parameters (and running statistics) fixed during training.
    pub freeze: bool,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig { widths: [16, 16, 32, 64, 128], blocks_per_layer: [1, 1, 1, 1], freeze: false }
    }
}

/// Which cross-branch edges the `diagonal_connections` switch controls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalReading {
    /// BI(upII_{i+1}) is concatenated onto the upI step input.
    #[default]
    CrossBranch,
    /// Experimental: upI_i feeds the correction concat; upI steps never see upII.
    CorrectionFeed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    /// Registered decoder name (`drnet` or `fullres` out of the box).
    pub kind: String,
    /// Output channels of upI_4..upI_0.
    #[serde(rename = "upI_widths")]
    pub upi_widths: [usize; 5],
    pub correction_kernel: usize,
    pub diagonal_connections: bool,
    pub auxiliary_outputs: bool,
    pub second_branch: bool,
    pub diagonal_reading: DiagonalReading,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            kind: "drnet".into(),
            upi_widths: [32, 32, 16, 16, 16],
            correction_kernel: 1,
            diagonal_connections: true,
            auxiliary_outputs: true,
            second_branch: true,
            diagonal_reading: DiagonalReading::CrossBranch,
        }
    }
}

impl DecoderConfig {
    /// Width of upI at `level` (4..=0).
    pub fn upi_width(&self, level: usize) -> usize {
        self.upi_widths[4 - level]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Offset inside `ln(x + alpha)`.
    pub alpha: f64,
    /// Weight of level i's loss, indexed by level (0 = full resolution).
    pub level_weights: [f64; 6],
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { alpha: 0.5, level_weights: [1.0; 6] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub betas: [f64; 2],
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub freeze_backbone: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            weight_decay: 1e-4,
            betas: [0.9, 0.999],
            eps: 1e-8,
            // chosen, not from the method description
            epochs: 20,
            batch_size: 4,
            seed: 0,
            freeze_backbone: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Random horizontal flips during training.
    pub hflip: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backbone: BackboneConfig,
    pub decoder: DecoderConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl RunConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| DrnetError::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_json(&text).map_err(|e| match e {
            DrnetError::Config { path: p, msg } if p == "config" => DrnetError::config(path.display().to_string(), msg),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Rejects the first invalid field with a path-qualified message.
    pub fn validate(&self) -> Result<()> {
        let b = &self.backbone;
        if let Some(i) = b.widths.iter().position(|&w| w < 4) {
            return Err(DrnetError::config(format!("backbone.widths[{i}]"), "must be >= 4"));
        }
        if let Some(i) = b.blocks_per_layer.iter().position(|&n| n == 0) {
            return Err(DrnetError::config(format!("backbone.blocks_per_layer[{i}]"), "must be >= 1"));
        }

        let d = &self.decoder;
        if !DecoderRegistry::with_builtins().contains(&d.kind) {
            return Err(DrnetError::config(
                "decoder.kind",
                format!("unknown decoder {:?}, expected one of {:?}", d.kind, DecoderRegistry::with_builtins().names()),
            ));
        }
        if let Some(i) = d.upi_widths.iter().position(|&w| w == 0) {
            return Err(DrnetError::config(format!("decoder.upI_widths[{i}]"), "must be >= 1"));
        }
        if !matches!(d.correction_kernel, 1 | 3 | 5) {
            return Err(DrnetError::config("decoder.correction_kernel", "must be 1, 3, or 5"));
        }

        let l = &self.loss;
        if !(l.alpha > 0.0 && l.alpha.is_finite()) {
            return Err(DrnetError::config("loss.alpha", "must be > 0"));
        }
        if let Some(i) = l.level_weights.iter().position(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(DrnetError::config(format!("loss.level_weights[{i}]"), "must be a finite value >= 0"));
        }

        let t = &self.train;
        if !(t.lr >= 0.0 && t.lr.is_finite()) {
            return Err(DrnetError::config("train.lr", "must be a finite value >= 0"));
        }
        if !(t.weight_decay >= 0.0 && t.weight_decay.is_finite()) {
            return Err(DrnetError::config("train.weight_decay", "must be a finite value >= 0"));
        }
        for (i, beta) in t.betas.iter().enumerate() {
            if !(0.0..1.0).contains(beta) {
                return Err(DrnetError::config(format!("train.betas[{i}]"), "must be in [0, 1)"));
            }
        }
        if !(t.eps > 0.0) {
            return Err(DrnetError::config("train.eps", "must be > 0"));
        }
        if t.batch_size == 0 {
            return Err(DrnetError::config("train.batch_size", "must be >= 1"));
        }
        Ok(())
    }

    /// Backbone frozen through either switch.
    pub fn backbone_frozen(&self) -> bool {
        self.backbone.freeze || self.train.freeze_backbone
    }
}
