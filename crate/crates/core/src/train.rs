//! Mini-batch training over the total loss, and evaluation.

use drnet_tensor::ops::Mode;
use drnet_tensor::{Real, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::Dataset;
use crate::error::{DrnetError, Result};
use crate::layers::{derive_seed, seeded, Module};
use crate::loss::total_loss;
use crate::metrics::{Metrics, MetricsAccumulator};
use crate::model::DepthModel;
use crate::optim::AdamAmsgrad;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    /// 1-based
    pub epoch: usize,
    pub batches: usize,
    /// Mean over batches of the weighted total loss.
    pub loss: Real,
    /// Means over batches of each term summed over the supervised levels.
    pub depth: Real,
    pub grad: Real,
    pub normal: Real,
}

pub struct Trainer {
    pub model: DepthModel,
    pub optim: AdamAmsgrad,
    pub config: RunConfig,
    epochs_done: usize,
}

impl Trainer {
    /// Fresh model initialized from `config.train.seed`.
    pub fn new(config: &RunConfig) -> Result<Self> {
        let model = DepthModel::new(&config.backbone, &config.decoder, config.train.seed)?;
        Ok(Trainer::from_parts(model, AdamAmsgrad::new(&config.train), config.clone(), 0))
    }

    pub fn from_parts(model: DepthModel, optim: AdamAmsgrad, config: RunConfig, epochs_done: usize) -> Self {
        Trainer { model, optim, config, epochs_done }
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    /// Sample order for the next epoch.
    pub fn epoch_order(&self, len: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut seeded(derive_seed(self.config.train.seed, self.epochs_done as u64)));
        order
    }

    /// Loss and gradients for one batch, then one optimizer step.
    pub fn train_step(&mut self, rgb: &Tensor, depth: &Tensor) -> Result<crate::loss::LossBreakdown> {
        let frozen = self.config.backbone_frozen();
        let pyramid = self.model.forward_with(rgb, Mode::Train, frozen)?;
        let (loss, breakdown) = total_loss(&pyramid, depth, &self.config.loss, self.model.decoder.auxiliary_outputs())?;
        drop(pyramid);
        loss.backward()?;
        drop(loss);
        let trainable = |name: &str| !(frozen && DepthModel::is_backbone_param(name));
        let result = self.optim.step(&mut self.model, &trainable);
        self.model.visit_params(&mut |p| p.zero_grad());
        result?;
        Ok(breakdown)
    }

    pub fn train_epoch(&mut self, data: &Dataset) -> Result<EpochReport> {
        if data.is_empty() {
            return Err(DrnetError::Dataset("training set is empty".into()));
        }
        let order = self.epoch_order(data.len());
        let mut flip_rng = seeded(derive_seed(derive_seed(self.config.train.seed, self.epochs_done as u64), 0xF11F));
        let mut report = EpochReport { epoch: self.epochs_done + 1, batches: 0, loss: 0.0, depth: 0.0, grad: 0.0, normal: 0.0 };
        for chunk in order.chunks(self.config.train.batch_size) {
            let (mut rgb, mut depth): (Vec<Tensor>, Vec<Tensor>) =
                chunk.iter().map(|&i| (data.samples[i].rgb.clone(), data.samples[i].depth.clone())).unzip();
            if self.config.data.hflip {
                for (r, d) in rgb.iter_mut().zip(depth.iter_mut()) {
                    if flip_rng.gen_bool(0.5) {
                        *r = r.flip_horizontal();
                        *d = d.flip_horizontal();
                    }
                }
            }
            let b = self.train_step(&Tensor::stack_batch(&rgb)?, &Tensor::stack_batch(&depth)?)?;
            report.batches += 1;
            report.loss += b.total;
            report.depth += b.levels.iter().map(|l| l.depth).sum::<Real>();
            report.grad += b.levels.iter().map(|l| l.grad).sum::<Real>();
            report.normal += b.levels.iter().map(|l| l.normal).sum::<Real>();
        }
        let n = report.batches as Real;
        report.loss /= n;
        report.depth /= n;
        report.grad /= n;
        report.normal /= n;
        self.epochs_done += 1;
        Ok(report)
    }
}

/// Eval-mode metrics of the model's full-resolution output over a dataset.
pub fn evaluate(model: &DepthModel, data: &Dataset, batch_size: usize) -> Result<Metrics> {
    let mut acc = MetricsAccumulator::default();
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let (rgb, depth) = data.batch(chunk)?;
        acc.add(&model.predict(&rgb)?, &depth)?;
    }
    acc.finish()
}
