//! Per-level depth, gradient and surface-normal losses and their weighted sum
//! over the depth pyramid.

use drnet_tensor::ops::{self, abs, add, add_scalar, log, mean, mul, mul_scalar, sqrt};
use drnet_tensor::{Real, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::LossConfig;
use crate::decoder::DepthPyramid;
use crate::error::{DrnetError, Result};

/// Horizontal Sobel stencil divided by 8 (cross-correlation layout).
pub const SOBEL_X: [Real; 9] = [-0.125, 0.0, 0.125, -0.25, 0.0, 0.25, -0.125, 0.0, 0.125];
pub const SOBEL_Y: [Real; 9] = [-0.125, -0.25, -0.125, 0.0, 0.0, 0.0, 0.125, 0.25, 0.125];

/// Smallest map the gradient operator accepts.
pub const SOBEL_MIN_SIZE: usize = 2;

/// Sobel/8 responses of a single-channel map with replicate padding; a
/// unit-slope ramp gives gradient 1.
pub fn sobel_gradients(x: &Tensor) -> Result<(Tensor, Tensor)> {
    let s = x.shape();
    if s.c != 1 {
        return Err(drnet_tensor::TensorError::Dimension { op: "sobel_gradients", axis: "channel", expected: 1, actual: s.c }.into());
    }
    if s.h < SOBEL_MIN_SIZE || s.w < SOBEL_MIN_SIZE {
        return Err(DrnetError::TooSmall { what: "sobel_gradients", min: SOBEL_MIN_SIZE, h: s.h, w: s.w });
    }
    let padded = ops::pad_replicate(x, 1)?;
    let kx = Tensor::from_vec((1, 1, 3, 3), SOBEL_X.to_vec())?;
    let ky = Tensor::from_vec((1, 1, 3, 3), SOBEL_Y.to_vec())?;
    Ok((ops::conv2d(&padded, &kx, None, 1, 0)?, ops::conv2d(&padded, &ky, None, 1, 0)?))
}

fn check_pair(op: &'static str, d: &Tensor, g: &Tensor) -> Result<()> {
    if d.shape() != g.shape() {
        return Err(drnet_tensor::TensorError::ShapeMismatch { op, left: d.shape(), right: g.shape() }.into());
    }
    Ok(())
}

/// `mean(ln(|d - g| + alpha))`
pub fn depth_loss(d: &Tensor, g: &Tensor, alpha: Real) -> Result<Tensor> {
    check_pair("depth_loss", d, g)?;
    Ok(mean(&log(&add_scalar(&abs(&ops::sub(d, g)?), alpha))))
}

/// With `e = |d - g|`: `mean(ln(|gx(e)| + alpha)) + mean(ln(|gy(e)| + alpha))`
pub fn grad_loss(d: &Tensor, g: &Tensor, alpha: Real) -> Result<Tensor> {
    check_pair("grad_loss", d, g)?;
    let e = abs(&ops::sub(d, g)?);
    let (gx, gy) = sobel_gradients(&e)?;
    let lx = mean(&log(&add_scalar(&abs(&gx), alpha)));
    let ly = mean(&log(&add_scalar(&abs(&gy), alpha)));
    Ok(add(&lx, &ly)?)
}

/// `1 - mean(cos(n_d, n_g))` with normals `(-gx, -gy, 1)`.
pub fn normal_loss(d: &Tensor, g: &Tensor) -> Result<Tensor> {
    check_pair("normal_loss", d, g)?;
    let (dx, dy) = sobel_gradients(d)?;
    let (gx, gy) = sobel_gradients(g)?;
    let dot = add_scalar(&add(&mul(&dx, &gx)?, &mul(&dy, &gy)?)?, 1.0);
    let norm = |x: &Tensor, y: &Tensor| -> Result<Tensor> { Ok(sqrt(&add_scalar(&add(&mul(x, x)?, &mul(y, y)?)?, 1.0))) };
    let denom = mul(&norm(&dx, &dy)?, &norm(&gx, &gy)?)?;
    let cos = ops::div(&dot, &denom)?;
    Ok(add_scalar(&mul_scalar(&mean(&cos), -1.0), 1.0))
}

/// Non-overlapping average pooling of the target to a level's size.
pub fn downsample_target(g: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    Ok(ops::avg_pool_to(g, out_h, out_w)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelLoss {
    pub level: usize,
    pub depth: Real,
    pub grad: Real,
    pub normal: Real,
}

impl LevelLoss {
    pub fn sum(&self) -> Real {
        self.depth + self.grad + self.normal
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Coarsest level first.
    pub levels: Vec<LevelLoss>,
    pub total: Real,
}

/// Weighted sum of per-level losses. Without `auxiliary` only level 0
/// contributes. Returns the differentiable scalar and its breakdown.
pub fn total_loss(pyramid: &DepthPyramid, g: &Tensor, config: &LossConfig, auxiliary: bool) -> Result<(Tensor, LossBreakdown)> {
    let mut total: Option<Tensor> = None;
    let mut levels = Vec::new();
    for lvl in &pyramid.levels {
        if !auxiliary && lvl.level != 0 {
            continue;
        }
        let s = lvl.map.shape();
        let target = downsample_target(g, s.h, s.w)?;
        let depth = depth_loss(&lvl.map, &target, config.alpha)?;
        let grad = grad_loss(&lvl.map, &target, config.alpha)?;
        let normal = normal_loss(&lvl.map, &target)?;
        levels.push(LevelLoss { level: lvl.level, depth: depth.item()?, grad: grad.item()?, normal: normal.item()? });
        let li = mul_scalar(&add(&add(&depth, &grad)?, &normal)?, config.level_weights[lvl.level]);
        total = Some(match total {
            Some(t) => add(&t, &li)?,
            None => li,
        });
    }
    let total = total.ok_or(drnet_tensor::TensorError::Empty("total_loss"))?;
    let value = total.item()?;
    Ok((total, LossBreakdown { levels, total: value }))
}
