use crate::error::{Result, TensorError};
use crate::tensor::{Backward, Real, Shape, Tensor};

struct MaxPool {
    /// Flat input index that won each output window.
    argmax: Vec<usize>,
}

impl Backward for MaxPool {
    fn name(&self) -> &'static str {
        "maxpool2d"
    }

    fn backward(&self, _out: &Tensor, g: &[Real], parents: &[Tensor]) -> Vec<Option<Vec<Real>>> {
        let mut dx = vec![0.0; parents[0].numel()];
        for (gi, &src) in g.iter().zip(&self.argmax) {
            dx[src] += gi;
        }
        vec![Some(dx)]
    }
}

/// Max pooling with implicit `-inf` padding. Ties go to the first element in
/// row-major scan order, which also receives the gradient.
pub fn maxpool2d(x: &Tensor, k: usize, stride: usize, pad: usize) -> Result<Tensor> {
    let s = x.shape();
    if k == 0 || stride == 0 {
        return Err(TensorError::Parameter { op: "maxpool2d", msg: format!("kernel {k} and stride {stride} must be >= 1") });
    }
    if pad >= k {
        return Err(TensorError::Parameter { op: "maxpool2d", msg: format!("padding {pad} must be smaller than kernel {k}") });
    }
    if s.h + 2 * pad < k {
        return Err(TensorError::Dimension { op: "maxpool2d", axis: "height", expected: k, actual: s.h + 2 * pad });
    }
    if s.w + 2 * pad < k {
        return Err(TensorError::Dimension { op: "maxpool2d", axis: "width", expected: k, actual: s.w + 2 * pad });
    }
    let oh = (s.h + 2 * pad - k) / stride + 1;
    let ow = (s.w + 2 * pad - k) / stride + 1;
    let out_shape = Shape::new(s.n, s.c, oh, ow);
    let mut out = Vec::with_capacity(out_shape.numel());
    let mut argmax = Vec::with_capacity(out_shape.numel());
    let data = x.data();
    for plane_idx in 0..s.n * s.c {
        let base = plane_idx * s.plane();
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = Real::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= s.w as isize {
                            continue;
                        }
                        let idx = base + iy as usize * s.w + ix as usize;
                        if best_idx == usize::MAX || data[idx] > best {
                            best = data[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok(Tensor::from_op(out_shape, out, vec![x.clone()], MaxPool { argmax }))
}

struct AvgPool {
    kh: usize,
    kw: usize,
}

impl Backward for AvgPool {
    fn name(&self) -> &'static str {
        "avg_pool"
    }

    fn backward(&self, out: &Tensor, g: &[Real], parents: &[Tensor]) -> Vec<Option<Vec<Real>>> {
        let s = parents[0].shape();
        let os = out.shape();
        let scale = 1.0 / (self.kh * self.kw) as Real;
        let mut dx = vec![0.0; s.numel()];
        for p in 0..s.n * s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    dx[p * s.plane() + y * s.w + x] = g[p * os.plane() + (y / self.kh) * os.w + x / self.kw] * scale;
                }
            }
        }
        vec![Some(dx)]
    }
}

/// Non-overlapping average pooling down to `(out_h, out_w)`; both must divide
/// the input's spatial size.
pub fn avg_pool_to(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let s = x.shape();
    if out_h == 0 || s.h % out_h != 0 {
        return Err(TensorError::Dimension { op: "avg_pool", axis: "height", expected: s.h, actual: out_h });
    }
    if out_w == 0 || s.w % out_w != 0 {
        return Err(TensorError::Dimension { op: "avg_pool", axis: "width", expected: s.w, actual: out_w });
    }
    let (kh, kw) = (s.h / out_h, s.w / out_w);
    let out_shape = Shape::new(s.n, s.c, out_h, out_w);
    let mut out = vec![0.0; out_shape.numel()];
    let scale = 1.0 / (kh * kw) as Real;
    for p in 0..s.n * s.c {
        let src = &x.data()[p * s.plane()..(p + 1) * s.plane()];
        let dst = &mut out[p * out_h * out_w..(p + 1) * out_h * out_w];
        for y in 0..s.h {
            for xx in 0..s.w {
                dst[(y / kh) * out_w + xx / kw] += src[y * s.w + xx];
            }
        }
        dst.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(Tensor::from_op(out_shape, out, vec![x.clone()], AvgPool { kh, kw }))
}
