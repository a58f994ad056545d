//! 2-D cross-correlation via im2col + GEMM.

use crate::error::{Result, TensorError};
use crate::tensor::{Backward, Real, Shape, Tensor};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    ci: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.ci * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// 1x1, stride 1, no padding: the input plane already is the column matrix.
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col(x: &[Real], g: &Geometry, cols: &mut [Real]) {
    let p = g.cols();
    for c in 0..g.ci {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[Real], g: &Geometry, dx: &mut [Real]) {
    let p = g.cols();
    for c in 0..g.ci {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c (m x n) = alpha * a (m x k) * b (k x n) + beta * c`, with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[Real],
    (rsa, csa): (usize, usize),
    b: &[Real],
    (rsb, csb): (usize, usize),
    beta: Real,
    c: &mut [Real],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the slices cover every index addressed by the given dims and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

struct Conv2d {
    geom: Geometry,
    has_bias: bool,
}

impl Backward for Conv2d {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, out: &Tensor, g: &[Real], parents: &[Tensor]) -> Vec<Option<Vec<Real>>> {
        let (x, weight) = (&parents[0], &parents[1]);
        let geom = &self.geom;
        let n = x.shape().n;
        let co = out.shape().c;
        let (kr, p) = (geom.rows(), geom.cols());
        let in_per = geom.ci * geom.h * geom.w;

        let want_x = x.requires_grad();
        let want_w = weight.requires_grad();
        let mut dx = want_x.then(|| vec![0.0; x.numel()]);
        let mut dw = want_w.then(|| vec![0.0; weight.numel()]);
        let mut cols = vec![0.0; if geom.is_pointwise() { 0 } else { kr * p }];
        let mut dcols = vec![0.0; if want_x { kr * p } else { 0 }];

        for b in 0..n {
            let gout = &g[b * co * p..(b + 1) * co * p];
            let xin = &x.data()[b * in_per..(b + 1) * in_per];
            if let Some(dw) = dw.as_mut() {
                let cols_ref: &[Real] = if geom.is_pointwise() {
                    xin
                } else {
                    im2col(xin, geom, &mut cols);
                    &cols
                };
                // dW (co x K) += gout (co x P) * cols^T (P x K)
                gemm(co, p, kr, gout, (p, 1), cols_ref, (1, p), 1.0, dw);
            }
            if let Some(dx) = dx.as_mut() {
                // dcols (K x P) = W^T (K x co) * gout (co x P)
                gemm(kr, co, p, weight.data(), (1, kr), gout, (p, 1), 0.0, &mut dcols);
                let dst = &mut dx[b * in_per..(b + 1) * in_per];
                if geom.is_pointwise() {
                    dst.iter_mut().zip(&dcols).for_each(|(d, s)| *d += s);
                } else {
                    col2im(&dcols, geom, dst);
                }
            }
        }

        let mut grads = vec![dx, dw];
        if self.has_bias {
            let bias = &parents[2];
            let db = bias.requires_grad().then(|| {
                let mut db = vec![0.0; co];
                for b in 0..n {
                    for (o, acc) in db.iter_mut().enumerate() {
                        let start = (b * co + o) * p;
                        *acc += g[start..start + p].iter().sum::<Real>();
                    }
                }
                db
            });
            grads.push(db);
        }
        grads
    }
}

/// 2-D cross-correlation (no kernel flip).
///
/// `weight` is `(co, ci, k, k)` with odd `k`; `bias`, when given, holds `co`
/// values. Output is `(n, co, (h + 2 pad - k) / stride + 1, ...)`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, stride: usize, pad: usize) -> Result<Tensor> {
    let xs = x.shape();
    let ws = weight.shape();
    if ws.c != xs.c {
        return Err(TensorError::Dimension { op: "conv2d", axis: "channel", expected: ws.c, actual: xs.c });
    }
    if ws.h != ws.w {
        return Err(TensorError::Dimension { op: "conv2d", axis: "kernel width", expected: ws.h, actual: ws.w });
    }
    let k = ws.h;
    if k % 2 == 0 {
        return Err(TensorError::Parameter { op: "conv2d", msg: format!("kernel size {k} must be odd") });
    }
    if stride == 0 {
        return Err(TensorError::Parameter { op: "conv2d", msg: "stride must be >= 1".into() });
    }
    if xs.h + 2 * pad < k {
        return Err(TensorError::Dimension { op: "conv2d", axis: "height", expected: k, actual: xs.h + 2 * pad });
    }
    if xs.w + 2 * pad < k {
        return Err(TensorError::Dimension { op: "conv2d", axis: "width", expected: k, actual: xs.w + 2 * pad });
    }
    if let Some(b) = bias {
        if b.numel() != ws.n {
            return Err(TensorError::Dimension { op: "conv2d", axis: "bias", expected: ws.n, actual: b.numel() });
        }
    }

    let geom = Geometry {
        ci: xs.c,
        h: xs.h,
        w: xs.w,
        k,
        stride,
        pad,
        oh: (xs.h + 2 * pad - k) / stride + 1,
        ow: (xs.w + 2 * pad - k) / stride + 1,
    };
    let co = ws.n;
    let (kr, p) = (geom.rows(), geom.cols());
    let in_per = xs.c * xs.h * xs.w;
    let out_shape = Shape::new(xs.n, co, geom.oh, geom.ow);
    let mut out = vec![0.0; out_shape.numel()];
    let mut cols = vec![0.0; if geom.is_pointwise() { 0 } else { kr * p }];

    for b in 0..xs.n {
        let xin = &x.data()[b * in_per..(b + 1) * in_per];
        let dst = &mut out[b * co * p..(b + 1) * co * p];
        if let Some(bias) = bias {
            for (o, row) in dst.chunks_mut(p).enumerate() {
                row.fill(bias.data()[o]);
            }
        }
        let cols_ref: &[Real] = if geom.is_pointwise() {
            xin
        } else {
            im2col(xin, &geom, &mut cols);
            &cols
        };
        gemm(co, kr, p, weight.data(), (kr, 1), cols_ref, (p, 1), 1.0, dst);
    }

    let mut parents = vec![x.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    Ok(Tensor::from_op(out_shape, out, parents, Conv2d { geom, has_bias: bias.is_some() }))
}
