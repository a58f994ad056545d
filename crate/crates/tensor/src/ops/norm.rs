use std::sync::Mutex;

use crate::error::{Result, TensorError};
use crate::tensor::{to_storage, Backward, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Running mean/variance of a batchnorm layer.
///
/// Updated in place during train-mode forwards; values are kept on the f32
/// storage grid.
#[derive(Debug)]
pub struct RunningStats {
    inner: Mutex<(Vec<Real>, Vec<Real>)>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats { inner: Mutex::new((vec![0.0; channels], vec![1.0; channels])) }
    }

    pub fn channels(&self) -> usize {
        self.inner.lock().unwrap().0.len()
    }

    pub fn mean(&self) -> Vec<Real> {
        self.inner.lock().unwrap().0.clone()
    }

    pub fn var(&self) -> Vec<Real> {
        self.inner.lock().unwrap().1.clone()
    }

    pub fn set(&self, mean: Vec<Real>, var: Vec<Real>) -> Result<()> {
        let c = self.channels();
        if mean.len() != c || var.len() != c {
            return Err(TensorError::Dimension { op: "running_stats", axis: "channel", expected: c, actual: mean.len() });
        }
        *self.inner.lock().unwrap() = (mean, var);
        Ok(())
    }

    fn update(&self, batch_mean: &[Real], batch_var_unbiased: &[Real], momentum: Real) {
        let mut guard = self.inner.lock().unwrap();
        let (mean, var) = &mut *guard;
        for c in 0..mean.len() {
            mean[c] = to_storage((1.0 - momentum) * mean[c] + momentum * batch_mean[c]);
            var[c] = to_storage((1.0 - momentum) * var[c] + momentum * batch_var_unbiased[c]);
        }
    }
}

impl Clone for RunningStats {
    fn clone(&self) -> Self {
        RunningStats { inner: Mutex::new(self.inner.lock().unwrap().clone()) }
    }
}

struct BatchNorm {
    /// Normalized input `(x - mu) * inv_std`, same layout as x.
    xhat: Vec<Real>,
    inv_std: Vec<Real>,
    mode: Mode,
}

impl Backward for BatchNorm {
    fn name(&self) -> &'static str {
        "batchnorm2d"
    }

    fn backward(&self, _out: &Tensor, g: &[Real], parents: &[Tensor]) -> Vec<Option<Vec<Real>>> {
        let (x, gamma) = (&parents[0], &parents[1]);
        let s = x.shape();
        let plane = s.plane();
        let count = (s.n * plane) as Real;
        let mut dgamma = vec![0.0; s.c];
        let mut dbeta = vec![0.0; s.c];
        for b in 0..s.n {
            for c in 0..s.c {
                let off = (b * s.c + c) * plane;
                for i in off..off + plane {
                    dgamma[c] += g[i] * self.xhat[i];
                    dbeta[c] += g[i];
                }
            }
        }

        let dx = x.requires_grad().then(|| {
            let mut dx = vec![0.0; x.numel()];
            for c in 0..s.c {
                let scale = gamma.data()[c] * self.inv_std[c];
                for b in 0..s.n {
                    let off = (b * s.c + c) * plane;
                    for i in off..off + plane {
                        dx[i] = match self.mode {
                            Mode::Eval => g[i] * scale,
                            // sum(dxhat) = gamma * dbeta, sum(dxhat * xhat) = gamma * dgamma
                            Mode::Train => scale * (g[i] - dbeta[c] / count - self.xhat[i] * dgamma[c] / count),
                        };
                    }
                }
            }
            dx
        });
        vec![dx, Some(dgamma), Some(dbeta)]
    }
}

/// Per-channel batch normalization over `(n, h, w)`.
///
/// Train mode normalizes with biased batch statistics and folds the unbiased
/// batch variance into `stats` with the given momentum. Eval mode uses `stats`.
pub fn batchnorm2d(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    stats: &RunningStats,
    mode: Mode,
    eps: Real,
    momentum: Real,
) -> Result<Tensor> {
    let s = x.shape();
    for (t, axis) in [(gamma, "gamma"), (beta, "beta")] {
        if t.numel() != s.c {
            return Err(TensorError::Dimension { op: "batchnorm2d", axis, expected: s.c, actual: t.numel() });
        }
    }
    if stats.channels() != s.c {
        return Err(TensorError::Dimension { op: "batchnorm2d", axis: "running stats", expected: s.c, actual: stats.channels() });
    }
    if eps <= 0.0 {
        return Err(TensorError::Parameter { op: "batchnorm2d", msg: format!("eps must be > 0, got {eps}") });
    }
    let plane = s.plane();
    let count = s.n * plane;

    let (mean, var) = match mode {
        Mode::Eval => (stats.mean(), stats.var()),
        Mode::Train => {
            if count <= 1 {
                return Err(TensorError::DegenerateStatistics { count });
            }
            let mut mean = vec![0.0; s.c];
            let mut var = vec![0.0; s.c];
            for c in 0..s.c {
                let mut acc = 0.0;
                for b in 0..s.n {
                    let off = (b * s.c + c) * plane;
                    acc += x.data()[off..off + plane].iter().sum::<Real>();
                }
                let mu = acc / count as Real;
                let mut sq = 0.0;
                for b in 0..s.n {
                    let off = (b * s.c + c) * plane;
                    sq += x.data()[off..off + plane].iter().map(|v| (v - mu) * (v - mu)).sum::<Real>();
                }
                mean[c] = mu;
                var[c] = sq / count as Real;
            }
            let unbiased: Vec<Real> = var.iter().map(|v| v * count as Real / (count - 1) as Real).collect();
            stats.update(&mean, &unbiased, momentum);
            (mean, var)
        }
    };

    let inv_std: Vec<Real> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![0.0; x.numel()];
    let mut out = vec![0.0; x.numel()];
    for b in 0..s.n {
        for c in 0..s.c {
            let off = (b * s.c + c) * plane;
            let (g, bt) = (gamma.data()[c], beta.data()[c]);
            for i in off..off + plane {
                let xh = (x.data()[i] - mean[c]) * inv_std[c];
                xhat[i] = xh;
                out[i] = g * xh + bt;
            }
        }
    }
    let op = BatchNorm { xhat, inv_std, mode };
    Ok(Tensor::from_op(s, out, vec![x.clone(), gamma.clone(), beta.clone()], op))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn affine(c: usize, g: Real, b: Real) -> (Tensor, Tensor) {
        (Tensor::full(Shape::vector(c), g), Tensor::full(Shape::vector(c), b))
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let data: Vec<Real> = (0..2 * 3 * 4 * 4).map(|i| ((i * 37 % 11) as Real).sin() * 3.0 + i as Real * 0.01).collect();
        let x = Tensor::from_vec((2, 3, 4, 4), data).unwrap();
        let (g, b) = affine(3, 1.0, 0.0);
        let stats = RunningStats::new(3);
        let y = batchnorm2d(&x, &g, &b, &stats, Mode::Train, 1e-5, 0.1).unwrap();
        for c in 0..3 {
            let vals: Vec<Real> = (0..2)
                .flat_map(|n| (0..4).flat_map(move |h| (0..4).map(move |w| (n, h, w))))
                .map(|(n, h, w)| y.at(n, c, h, w))
                .collect();
            let m = vals.iter().sum::<Real>() / vals.len() as Real;
            let v = vals.iter().map(|v| (v - m).powi(2)).sum::<Real>() / vals.len() as Real;
            assert!(m.abs() < 1e-3, "mean {m}");
            assert!((v - 1.0).abs() < 1e-3, "var {v}");
        }
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let x = Tensor::full((2, 1, 3, 3), 4.2);
        let (g, b) = affine(1, 1.0, 5.0);
        let y = batchnorm2d(&x, &g, &b, &RunningStats::new(1), Mode::Train, 1e-5, 0.1).unwrap();
        assert!(y.data().iter().all(|&v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn eval_with_identity_stats_is_affine() {
        let x = Tensor::from_vec((1, 2, 1, 2), vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let g = Tensor::from_vec(Shape::vector(2), vec![2.0, -1.0]).unwrap();
        let b = Tensor::from_vec(Shape::vector(2), vec![0.5, 1.0]).unwrap();
        let eps = 1e-5;
        let y = batchnorm2d(&x, &g, &b, &RunningStats::new(2), Mode::Eval, eps, 0.1).unwrap();
        let s = 1.0 / (1.0 + eps).sqrt();
        let expect = [2.0 * 1.0 * s + 0.5, 2.0 * -2.0 * s + 0.5, -0.5 * s + 1.0, -3.0 * s + 1.0];
        for (a, e) in y.data().iter().zip(expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn single_value_per_channel_is_degenerate() {
        let x = Tensor::zeros((1, 2, 1, 1));
        let (g, b) = affine(2, 1.0, 0.0);
        let err = batchnorm2d(&x, &g, &b, &RunningStats::new(2), Mode::Train, 1e-5, 0.1).unwrap_err();
        assert!(matches!(err, TensorError::DegenerateStatistics { count: 1 }));
    }

    #[test]
    fn running_stats_follow_momentum() {
        let x = Tensor::from_vec((1, 1, 1, 2), vec![1.0, 3.0]).unwrap();
        let (g, b) = affine(1, 1.0, 0.0);
        let stats = RunningStats::new(1);
        batchnorm2d(&x, &g, &b, &stats, Mode::Train, 1e-5, 0.1).unwrap();
        // batch mean 2, unbiased var 2
        assert!((stats.mean()[0] - 0.2).abs() < 1e-7);
        assert!((stats.var()[0] - (0.9 + 0.2)).abs() < 1e-7);
    }
}
