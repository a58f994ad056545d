//! Depth accuracy metrics: RMSE, mean absolute log10 error and the
//! threshold accuracies delta_k = fraction with max(d/g, g/d) < 1.25^k.

use drnet_tensor::{Real, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{DrnetError, Result};

pub const CLAMP_MIN: Real = 1e-3;
pub const CLAMP_MAX: Real = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: Real,
    pub log10: Real,
    pub delta1: Real,
    pub delta2: Real,
    pub delta3: Real,
}

/// Running sums over any number of maps; pixels with `g <= 0` are ignored.
#[derive(Clone, Debug, Default)]
pub struct MetricsAccumulator {
    count: usize,
    sq: Real,
    log10: Real,
    within: [usize; 3],
}

impl MetricsAccumulator {
    pub fn add(&mut self, d: &Tensor, g: &Tensor) -> Result<()> {
        if d.shape() != g.shape() {
            return Err(drnet_tensor::TensorError::ShapeMismatch { op: "evaluate_metrics", left: d.shape(), right: g.shape() }.into());
        }
        let thresholds = [1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25];
        for (&dv, &gv) in d.data().iter().zip(g.data()) {
            if !(gv > 0.0) {
                continue;
            }
            let dv = dv.clamp(CLAMP_MIN, CLAMP_MAX);
            self.count += 1;
            self.sq += (dv - gv) * (dv - gv);
            self.log10 += (dv.log10() - gv.log10()).abs();
            let ratio = (dv / gv).max(gv / dv);
            for (k, t) in thresholds.iter().enumerate() {
                if ratio < *t {
                    self.within[k] += 1;
                }
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<Metrics> {
        if self.count == 0 {
            return Err(DrnetError::EmptyMask);
        }
        let n = self.count as Real;
        Ok(Metrics {
            rmse: (self.sq / n).sqrt(),
            log10: self.log10 / n,
            delta1: self.within[0] as Real / n,
            delta2: self.within[1] as Real / n,
            delta3: self.within[2] as Real / n,
        })
    }
}

pub fn evaluate_metrics(d: &Tensor, g: &Tensor) -> Result<Metrics> {
    let mut acc = MetricsAccumulator::default();
    acc.add(d, g)?;
    acc.finish()
}
