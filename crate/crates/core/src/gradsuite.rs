//! The finite-difference suite behind `drnet gradcheck`: every tensor op, the
//! decoder building blocks, the losses, and the end-to-end loss of a default
//! 64x64 model.

use std::time::Instant;

use drnet_tensor::gradcheck::{finite_diff_check, finite_diff_check_at, DEFAULT_STEP};
use drnet_tensor::ops::{self, Mode, RunningStats};
use drnet_tensor::{no_grad, Real, Shape, Tensor, TensorError};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{FeaturePyramid, ResidualBlock};
use crate::config::{LossConfig, RunConfig};
use crate::data::synth_scene;
use crate::error::{DrnetError, Result};
use crate::layers::{seeded, Module};
use crate::loss::{depth_loss, grad_loss, normal_loss, total_loss};
use crate::model::DepthModel;

pub const TOLERANCE: Real = 1e-4;
/// Step for checks through the whole network, where ReLU kinks are dense.
pub const FINE_STEP: Real = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: Real,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub checks: Vec<CheckResult>,
    pub elapsed_secs: Real,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn lift<T>(r: Result<T>) -> drnet_tensor::Result<T> {
    r.map_err(|e| match e {
        DrnetError::Tensor(t) => t,
        other => TensorError::Parameter { op: "gradsuite", msg: other.to_string() },
    })
}

/// Uniform in (-1, 1) with every value at least 0.05 away from 0.
fn random(shape: impl Into<Shape>, seed: u64) -> Tensor {
    let shape = shape.into();
    let mut rng = seeded(seed);
    let data = (0..shape.numel())
        .map(|_| {
            let v: Real = rng.gen_range(-1.0..1.0);
            if v.abs() < 0.05 {
                v + 0.1 * v.signum()
            } else {
                v
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("length matches")
}

fn positive(shape: impl Into<Shape>, seed: u64) -> Tensor {
    ops::add_scalar(&ops::abs(&random(shape, seed)), 0.5)
}

/// Random linear functional so every output coordinate carries its own weight.
fn weighted_sum(y: &Tensor, seed: u64) -> drnet_tensor::Result<Tensor> {
    Ok(ops::sum(&ops::mul(y, &random(y.shape(), seed))?))
}

fn sample_coords(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded(seed);
    (0..count.min(n)).map(|_| rng.gen_range(0..n)).collect()
}

struct Suite {
    checks: Vec<CheckResult>,
}

impl Suite {
    fn record(&mut self, name: impl Into<String>, err: Result<Real>) {
        let name = name.into();
        let (max_rel_error, passed) = match err {
            Ok(e) => (e, e < TOLERANCE),
            Err(_) => (Real::INFINITY, false),
        };
        self.checks.push(CheckResult { name, max_rel_error, passed });
    }

    fn check<F>(&mut self, name: &str, f: F, x: &Tensor)
    where
        F: Fn(&Tensor) -> drnet_tensor::Result<Tensor>,
    {
        self.record(name, finite_diff_check(f, x, DEFAULT_STEP).map_err(Into::into));
    }

    fn check_at<F>(&mut self, name: &str, f: F, x: &Tensor, h: Real, coords: &[usize])
    where
        F: Fn(&Tensor) -> drnet_tensor::Result<Tensor>,
    {
        self.record(name, finite_diff_check_at(f, x, h, coords).map_err(Into::into));
    }

    /// Kink guard for checks through the whole piecewise-linear network: a
    /// coordinate failing at step `h` is re-measured at `h / 10`. A crossed
    /// ReLU or max-pool kink disappears as the step shrinks; a wrong gradient
    /// does not.
    fn check_at_refined<F>(&mut self, name: &str, f: F, x: &Tensor, h: Real, coords: &[usize])
    where
        F: Fn(&Tensor) -> drnet_tensor::Result<Tensor>,
    {
        let err = (|| -> Result<Real> {
            let mut worst: Real = 0.0;
            for &i in coords {
                let mut e = finite_diff_check_at(&f, x, h, &[i])?;
                if e >= TOLERANCE {
                    e = e.min(finite_diff_check_at(&f, x, h / 10.0, &[i])?);
                }
                worst = worst.max(e);
            }
            Ok(worst)
        })();
        self.record(name, err);
    }
}

fn tensor_ops(s: &mut Suite) {
    for (k, stride, pad) in [(1, 1, 0), (3, 1, 1), (3, 2, 1), (5, 1, 2), (7, 2, 3)] {
        let x = random((2, 2, 6, 6), 1);
        let w = random((3, 2, k, k), 2);
        let b = random(Shape::vector(3), 3);
        s.check(&format!("conv2d k{k} s{stride} dx"), |t| weighted_sum(&ops::conv2d(t, &w, Some(&b), stride, pad)?, 4), &x);
        s.check(&format!("conv2d k{k} s{stride} dw"), |t| weighted_sum(&ops::conv2d(&x, t, Some(&b), stride, pad)?, 4), &w);
        s.check(&format!("conv2d k{k} s{stride} db"), |t| weighted_sum(&ops::conv2d(&x, &w, Some(t), stride, pad)?, 4), &b);
    }

    let x = random((2, 3, 3, 3), 5);
    let gamma = positive(Shape::vector(3), 6);
    let beta = random(Shape::vector(3), 7);
    for mode in [Mode::Train, Mode::Eval] {
        let stats = RunningStats::new(3);
        stats.set(vec![0.1, -0.2, 0.3], vec![0.5, 1.5, 2.0]).expect("three channels");
        let bn = |x: &Tensor, g: &Tensor, b: &Tensor| ops::batchnorm2d(x, g, b, &stats, mode, 1e-5, 0.1);
        let tag = if mode == Mode::Train { "train" } else { "eval" };
        s.check(&format!("batchnorm2d {tag} dx"), |t| weighted_sum(&bn(t, &gamma, &beta)?, 8), &x);
        s.check(&format!("batchnorm2d {tag} dgamma"), |t| weighted_sum(&bn(&x, t, &beta)?, 8), &gamma);
        s.check(&format!("batchnorm2d {tag} dbeta"), |t| weighted_sum(&bn(&x, &gamma, t)?, 8), &beta);
    }

    let x = random((1, 2, 4, 5), 9);
    let p = positive((1, 2, 4, 5), 10);
    let y = random((1, 2, 4, 5), 11);
    s.check("relu", |t| weighted_sum(&ops::relu(t), 12), &x);
    s.check("abs", |t| weighted_sum(&ops::abs(t), 12), &x);
    s.check("log", |t| weighted_sum(&ops::log(t), 12), &p);
    s.check("sqrt", |t| weighted_sum(&ops::sqrt(t), 12), &p);
    s.check("add", |t| weighted_sum(&ops::add(t, &y)?, 12), &x);
    s.check("sub", |t| weighted_sum(&ops::sub(&y, t)?, 12), &x);
    s.check("mul", |t| weighted_sum(&ops::mul(t, &y)?, 12), &x);
    s.check("div numerator", |t| weighted_sum(&ops::div(t, &p)?, 12), &x);
    s.check("div denominator", |t| weighted_sum(&ops::div(&y, t)?, 12), &p);
    s.check("mul_scalar", |t| weighted_sum(&ops::mul_scalar(t, -1.7), 12), &x);
    s.check("add_scalar", |t| weighted_sum(&ops::add_scalar(t, 0.3), 12), &x);
    s.check("mean", |t| Ok(ops::mul_scalar(&ops::mean(&ops::mul(t, t)?), 3.0)), &x);
    s.check("sum", |t| Ok(ops::sum(&ops::mul(t, &y)?)), &x);

    let x = random((1, 2, 6, 6), 13);
    s.check("maxpool2d k3 s2 p1", |t| weighted_sum(&ops::maxpool2d(t, 3, 2, 1)?, 14), &x);
    s.check("maxpool2d k2 s2", |t| weighted_sum(&ops::maxpool2d(t, 2, 2, 0)?, 14), &x);
    s.check("avg_pool_to", |t| weighted_sum(&ops::avg_pool_to(t, 3, 2)?, 14), &x);
    s.check("pad_replicate", |t| weighted_sum(&ops::pad_replicate(t, 2)?, 14), &x);
    for f in [1, 2, 4] {
        s.check(&format!("bilinear_upsample x{f}"), |t| weighted_sum(&ops::bilinear_upsample(t, f)?, 15), &x);
    }
    for r in [1, 2, 4] {
        let x = random((1, 2 * r * r, 3, 2), 16);
        s.check(&format!("pixel_shuffle r{r}"), |t| weighted_sum(&ops::pixel_shuffle(t, r)?, 17), &x);
    }
    let a = random((2, 1, 3, 3), 18);
    let b = random((2, 3, 3, 3), 19);
    s.check("concat_channels first", |t| weighted_sum(&ops::concat_channels(&[t, &b])?, 20), &a);
    s.check("concat_channels second", |t| weighted_sum(&ops::concat_channels(&[&a, t])?, 20), &b);
    s.check("relu(conv2d)", |t| Ok(ops::sum(&ops::relu(&ops::conv2d(t, &random((2, 2, 3, 3), 22), None, 1, 1)?))), &x);
}

fn blocks(s: &mut Suite) {
    for (stride, co) in [(1, 4), (2, 6)] {
        let block = ResidualBlock::new("b", 4, co, stride, &mut seeded(30)).expect("valid block");
        let x = random((2, 4, 8, 8), 31);
        s.check(
            &format!("residual_block stride {stride}"),
            |t| weighted_sum(&lift(block.forward(t, Mode::Train))?, 32),
            &x,
        );
    }
}

fn losses(s: &mut Suite) {
    let g = positive((2, 1, 5, 5), 40);
    let d = positive((2, 1, 5, 5), 41);
    s.check("depth_loss", |t| lift(depth_loss(t, &g, 0.5)), &d);
    s.check("grad_loss", |t| lift(grad_loss(t, &g, 0.5)), &d);
    s.check("normal_loss", |t| lift(normal_loss(t, &g)), &d);
}

/// Decoder building blocks through the full decoder: gradient of a linear
/// functional of upII_0 with respect to each backbone map.
fn decoder(s: &mut Suite, model: &DepthModel, features: &FeaturePyramid) {
    for level in 1..=5 {
        let base = features.level(level).clone();
        let f = |t: &Tensor| {
            let mut down = features.down.clone();
            down[level - 1] = t.clone();
            let fp = FeaturePyramid { down, input_hw: features.input_hw };
            let p = lift(model.decoder.forward(&fp, Mode::Train))?;
            weighted_sum(p.finest(), 50)
        };
        let coords = sample_coords(base.numel(), 24, 51 + level as u64);
        s.check_at(&format!("decoder d/d down_{level}"), f, &base, FINE_STEP, &coords);
    }
}

fn end_to_end(s: &mut Suite) -> Result<()> {
    let config = RunConfig::default();
    let model = DepthModel::new(&config.backbone, &config.decoder, 0)?;
    let scene = synth_scene(7, 64, 64)?;
    let scene2 = synth_scene(8, 64, 64)?;
    // 8-bit scene images have flat regions whose exact ties sit on max-pool
    // kinks, so the input is continuous noise; the scenes serve as targets
    let img = ops::mul_scalar(&ops::add_scalar(&random((2, 3, 64, 64), 63), 1.0), 0.5);
    let target = Tensor::stack_batch(&[scene.depth, scene2.depth])?;
    let loss_cfg = LossConfig::default();

    let features = no_grad(|| model.features(&img, Mode::Train, false))?;
    decoder(s, &model, &features);

    let pyramid = no_grad(|| model.forward(&img, Mode::Train))?;
    let level0 = pyramid.finest().clone();
    let coords = sample_coords(level0.numel(), 48, 60);
    let with_level0 = |t: &Tensor| {
        let mut p = pyramid.clone();
        p.levels.last_mut().expect("level 0").map = t.clone();
        Ok(lift(total_loss(&p, &target, &loss_cfg, true))?.0)
    };
    s.check_at("total_loss d/d upII_0", with_level0, &level0, DEFAULT_STEP, &coords);

    // Through the whole network batchnorm runs on running statistics: in train
    // mode one perturbed pixel moves every unit of the batch and the
    // difference quotient crosses ReLU kinks. Train-mode batchnorm is covered
    // by the op, block and decoder checks above.
    let coords = sample_coords(img.numel(), 32, 61);
    s.check_at_refined(
        "sum(upII_0) d/d image",
        |t| Ok(ops::sum(lift(model.forward(t, Mode::Eval))?.finest())),
        &img,
        DEFAULT_STEP,
        &coords,
    );
    let loss_of = |m: &DepthModel, x: &Tensor| -> Result<Tensor> {
        let p = m.forward(x, Mode::Eval)?;
        Ok(total_loss(&p, &target, &loss_cfg, true)?.0)
    };
    s.check_at_refined("total_loss d/d image", |t| lift(loss_of(&model, t)), &img, DEFAULT_STEP, &coords);

    // parameters: analytic gradients from one backward, numeric ones from
    // perturbed copies of the model
    model.visit_params(&mut |p| p.zero_grad());
    loss_of(&model, &img)?.backward()?;
    let mut analytic = Vec::new();
    model.visit_params(&mut |p| analytic.push((p.name().to_string(), p.grad())));
    model.visit_params(&mut |p| p.zero_grad());
    let picks = [
        "backbone.layer0.conv.weight",
        "backbone.layer3.0.bn2.gamma",
        "decoder.head5.weight",
        "decoder.upI.2.conv.weight",
        "decoder.upI.0.bn.beta",
        "decoder.corr.1.weight",
        "decoder.corr.0.bias",
    ];
    for name in picks {
        let grad = analytic.iter().find(|(n, _)| n == name).and_then(|(_, g)| g.clone());
        let err = (|| -> Result<Real> {
            let grad = grad.ok_or_else(|| DrnetError::MissingGradient(name.to_string()))?;
            let coords = sample_coords(grad.len(), 8, 62);
            let mut worst: Real = 0.0;
            for &i in &coords {
                let eval = |delta: Real| -> Result<(Real, Real)> {
                    let mut m = model.clone();
                    let mut realized = 0.0;
                    m.visit_params_mut(&mut |p| {
                        if p.name() == name {
                            let mut v = p.values().to_vec();
                            v[i] += delta;
                            p.set_values(v).expect("same length");
                            realized = p.values()[i];
                        }
                    });
                    Ok((no_grad(|| loss_of(&m, &img))?.item()?, realized))
                };
                // the realized step is exact even though values snap to f32;
                // same kink guard as the input checks
                let mut err = Real::INFINITY;
                for h in [FINE_STEP, FINE_STEP / 10.0] {
                    let (fp, xp) = eval(h)?;
                    let (fm, xm) = eval(-h)?;
                    let numeric = (fp - fm) / (xp - xm);
                    err = err.min((grad[i] - numeric).abs() / numeric.abs().max(1.0));
                    if err < TOLERANCE {
                        break;
                    }
                }
                worst = worst.max(err);
            }
            Ok(worst)
        })();
        s.record(format!("total_loss d/d {name}"), err);
    }
    Ok(())
}

/// Runs every check; individual failures are reported, not returned as errors.
pub fn run_suite() -> Result<SuiteReport> {
    let start = Instant::now();
    let mut s = Suite { checks: Vec::new() };
    tensor_ops(&mut s);
    blocks(&mut s);
    losses(&mut s);
    end_to_end(&mut s)?;
    Ok(SuiteReport { checks: s.checks, elapsed_secs: start.elapsed().as_secs_f64() })
}
