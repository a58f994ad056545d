//! Central finite differences as an independent oracle for `backward`.

use crate::error::{Result, TensorError};
use crate::tensor::{no_grad, Real, Tensor};

/// Default step at 64-bit precision.
pub const DEFAULT_STEP: Real = 1e-5;

/// Compares the analytic gradient of scalar `f` at `x` with central
/// differences over every coordinate.
///
/// Returns `max |analytic - numeric| / max(1, |numeric|)`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, h: Real) -> Result<Real>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let coords: Vec<usize> = (0..x.numel()).collect();
    finite_diff_check_at(f, x, h, &coords)
}

/// Same as [`finite_diff_check`], restricted to the given flat coordinates.
pub fn finite_diff_check_at<F>(f: F, x: &Tensor, h: Real, coords: &[usize]) -> Result<Real>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    if h <= 0.0 {
        return Err(TensorError::Parameter { op: "finite_diff_check", msg: format!("step {h} must be > 0") });
    }
    let leaf = x.to_leaf();
    let out = f(&leaf)?;
    if !out.shape().is_scalar() {
        return Err(TensorError::NotScalar(out.shape()));
    }
    out.backward()?;
    let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; x.numel()]);

    let base = x.data().to_vec();
    let eval = |i: usize, delta: Real| -> Result<Real> {
        let mut v = base.clone();
        v[i] += delta;
        let t = Tensor::from_vec(x.shape(), v)?;
        no_grad(|| f(&t))?.item()
    };

    let mut worst: Real = 0.0;
    for &i in coords {
        let numeric = (eval(i, h)? - eval(i, -h)?) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::from_vec((1, 1, 2, 3), vec![0.3, -1.0, 2.0, 5.0, 0.0, 1.0]).unwrap();
        let err = finite_diff_check(|t| Ok(ops::sum(t)), &x, DEFAULT_STEP).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn square_at_three() {
        let x = Tensor::from_vec((1, 1, 1, 1), vec![3.0]).unwrap();
        let f = |t: &Tensor| Ok(ops::sum(&ops::mul(t, t)?));
        let leaf = x.to_leaf();
        f(&leaf).unwrap().backward().unwrap();
        assert_eq!(leaf.grad().unwrap(), vec![6.0]);
        let err = finite_diff_check(f, &x, DEFAULT_STEP).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn non_scalar_output_rejected() {
        let x = Tensor::zeros((1, 1, 2, 2));
        assert!(finite_diff_check(|t| Ok(t.clone()), &x, DEFAULT_STEP).is_err());
    }
}
