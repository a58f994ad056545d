//! Elementwise arithmetic and reductions: the closure needed by the losses.

use crate::error::{Result, TensorError};
use crate::tensor::{Backward, Real, Shape, Tensor};

#[derive(Clone, Copy, Debug)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

struct Binary(BinaryKind);

impl Backward for Binary {
    fn name(&self) -> &'static str {
        match self.0 {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        }
    }

    fn backward(&self, _out: &Tensor, g: &[Real], parents: &[Tensor]) -> Vec<Option<Vec<Real>>> {
        let (a, b) = (&parents[0], &parents[1]);
        let (da, db) = match self.0 {
            BinaryKind::Add => (g.to_vec(), g.to_vec()),
            BinaryKind::Sub => (g.to_vec(), g.iter().map(|v| -v).collect()),
            BinaryKind::Mul => (
                g.iter().zip(b.data()).map(|(g, b)| g * b).collect(),
                g.iter().zip(a.data()).map(|(g, a)| g * a).collect(),
            ),
            BinaryKind::Div => (
                g.iter().zip(b.data()).map(|(g, b)| g / b).collect(),
                g.iter()
                    .zip(a.data().iter().zip(b.data()))
                    .map(|(g, (a, b))| -g * a / (b * b))
                    .collect(),
            ),
        };
        vec![Some(da), Some(db)]
    }
}

fn binary(a: &Tensor, b: &Tensor, kind: BinaryKind) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch { op: Binary(kind).name(), left: a.shape(), right: b.shape() });
    }
    let f: fn(Real, Real) -> Real = match kind {
        BinaryKind::Add => |x, y| x + y,
        BinaryKind::Sub => |x, y| x - y,
        BinaryKind::Mul => |x, y| x * y,
        BinaryKind::Div => |x, y| x / y,
    };
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor::from_op(a.shape(), data, vec![a.clone(), b.clone()], Binary(kind)))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary(a, b, BinaryKind::Add)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary(a, b, BinaryKind::Sub)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary(a, b, BinaryKind::Mul)
}

pub fn div(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary(a, b, BinaryKind::Div)
}

#[derive(Clone, Copy, Debug)]
enum UnaryKind {
    Relu,
    Abs,
    Log,
    Sqrt,
    Scale(Real),
    Shift(Real),
}

struct Unary(UnaryKind);

impl Backward for Unary {
    fn name(&self) -> &'static str {
        match self.0 {
            UnaryKind::Relu => "relu",
            UnaryKind::Abs => "abs",
            UnaryKind::Log => "log",
            UnaryKind::Sqrt => "sqrt",
            UnaryKind::Scale(_) => "mul_scalar",
            UnaryKind::Shift(_) => "add_scalar",
        }
    }

    fn backward(&self, out: &Tensor, g: &[Real], parents: &[Tensor]) -> Vec<Option<Vec<Real>>> {
        let x = parents[0].data();
        let dx = match self.0 {
            // subgradient 0 at the kink
            UnaryKind::Relu => g.iter().zip(x).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect(),
            UnaryKind::Abs => g
                .iter()
                .zip(x)
                .map(|(g, &x)| {
                    if x > 0.0 {
                        *g
                    } else if x < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                })
                .collect(),
            UnaryKind::Log => g.iter().zip(x).map(|(g, x)| g / x).collect(),
            UnaryKind::Sqrt => g.iter().zip(out.data()).map(|(g, y)| g * 0.5 / y).collect(),
            UnaryKind::Scale(s) => g.iter().map(|g| g * s).collect(),
            UnaryKind::Shift(_) => g.to_vec(),
        };
        vec![Some(dx)]
    }
}

fn unary(x: &Tensor, kind: UnaryKind) -> Tensor {
    let data = match kind {
        UnaryKind::Relu => x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        UnaryKind::Abs => x.data().iter().map(|v| v.abs()).collect(),
        UnaryKind::Log => x.data().iter().map(|v| v.ln()).collect(),
        UnaryKind::Sqrt => x.data().iter().map(|v| v.sqrt()).collect(),
        UnaryKind::Scale(s) => x.data().iter().map(|v| v * s).collect(),
        UnaryKind::Shift(s) => x.data().iter().map(|v| v + s).collect(),
    };
    Tensor::from_op(x.shape(), data, vec![x.clone()], Unary(kind))
}

/// Elementwise `max(x, 0)`.
pub fn relu(x: &Tensor) -> Tensor {
    unary(x, UnaryKind::Relu)
}

pub fn abs(x: &Tensor) -> Tensor {
    unary(x, UnaryKind::Abs)
}

/// Natural logarithm.
pub fn log(x: &Tensor) -> Tensor {
    unary(x, UnaryKind::Log)
}

pub fn sqrt(x: &Tensor) -> Tensor {
    unary(x, UnaryKind::Sqrt)
}

pub fn mul_scalar(x: &Tensor, s: Real) -> Tensor {
    unary(x, UnaryKind::Scale(s))
}

pub fn add_scalar(x: &Tensor, s: Real) -> Tensor {
    unary(x, UnaryKind::Shift(s))
}

struct Reduce {
    mean: bool,
}

impl Backward for Reduce {
    fn name(&self) -> &'static str {
        if self.mean {
            "mean"
        } else {
            "sum"
        }
    }

    fn backward(&self, _out: &Tensor, g: &[Real], parents: &[Tensor]) -> Vec<Option<Vec<Real>>> {
        let n = parents[0].numel();
        let v = if self.mean { g[0] / n as Real } else { g[0] };
        vec![Some(vec![v; n])]
    }
}

/// Sum of all elements as a `(1, 1, 1, 1)` tensor.
pub fn sum(x: &Tensor) -> Tensor {
    let s: Real = x.data().iter().sum();
    Tensor::from_op(Shape::scalar(), vec![s], vec![x.clone()], Reduce { mean: false })
}

/// Mean of all elements as a `(1, 1, 1, 1)` tensor.
pub fn mean(x: &Tensor) -> Tensor {
    let s: Real = x.data().iter().sum::<Real>() / x.numel() as Real;
    Tensor::from_op(Shape::scalar(), vec![s], vec![x.clone()], Reduce { mean: true })
}
