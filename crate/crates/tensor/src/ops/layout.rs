//! Pure data-movement ops: pixel shuffle, channel concat, replicate padding.

use crate::error::{Result, TensorError};
use crate::tensor::{Backward, Real, Shape, Tensor};

struct PixelShuffle {
    r: usize,
}

#[inline]
fn shuffle_index(out: Shape, r: usize, n: usize, c: usize, y: usize, x: usize) -> usize {
    // out[n, c, y, x] = in[n, c*r*r + (y % r)*r + (x % r), y / r, x / r]
    let (ih, iw) = (out.h / r, out.w / r);
    let ic = c * r * r + (y % r) * r + (x % r);
    ((n * out.c * r * r + ic) * ih + y / r) * iw + x / r
}

impl Backward for PixelShuffle {
    fn name(&self) -> &'static str {
        "pixel_shuffle"
    }

    fn backward(&self, out: &Tensor, g: &[Real], parents: &[Tensor]) -> Vec<Option<Vec<Real>>> {
        let os = out.shape();
        let mut dx = vec![0.0; parents[0].numel()];
        let mut i = 0;
        for n in 0..os.n {
            for c in 0..os.c {
                for y in 0..os.h {
                    for x in 0..os.w {
                        dx[shuffle_index(os, self.r, n, c, y, x)] = g[i];
                        i += 1;
                    }
                }
            }
        }
        vec![Some(dx)]
    }
}

/// Rearranges `(n, c*r^2, h, w)` into `(n, c, h*r, w*r)`.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let s = x.shape();
    if r == 0 {
        return Err(TensorError::Parameter { op: "pixel_shuffle", msg: "factor must be >= 1".into() });
    }
    if s.c % (r * r) != 0 {
        return Err(TensorError::ChannelDivisibility { channels: s.c, r2: r * r });
    }
    if r == 1 {
        return Ok(x.clone());
    }
    let os = Shape::new(s.n, s.c / (r * r), s.h * r, s.w * r);
    let src = x.data();
    let mut out = Vec::with_capacity(os.numel());
    for n in 0..os.n {
        for c in 0..os.c {
            for y in 0..os.h {
                for xx in 0..os.w {
                    out.push(src[shuffle_index(os, r, n, c, y, xx)]);
                }
            }
        }
    }
    Ok(Tensor::from_op(os, out, vec![x.clone()], PixelShuffle { r }))
}

struct Concat {
    channels: Vec<usize>,
}

impl Backward for Concat {
    fn name(&self) -> &'static str {
        "concat_channels"
    }

    fn backward(&self, out: &Tensor, g: &[Real], parents: &[Tensor]) -> Vec<Option<Vec<Real>>> {
        let os = out.shape();
        let plane = os.plane();
        let mut grads: Vec<Vec<Real>> = parents.iter().map(|p| Vec::with_capacity(p.numel())).collect();
        for n in 0..os.n {
            let mut c0 = 0;
            for (gi, &c) in grads.iter_mut().zip(&self.channels) {
                let start = (n * os.c + c0) * plane;
                gi.extend_from_slice(&g[start..start + c * plane]);
                c0 += c;
            }
        }
        grads.into_iter().map(Some).collect()
    }
}

/// Stacks inputs along the channel axis in argument order.
pub fn concat_channels(xs: &[&Tensor]) -> Result<Tensor> {
    let first = xs.first().ok_or(TensorError::Empty("concat_channels"))?.shape();
    for t in &xs[1..] {
        let s = t.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(TensorError::ShapeMismatch { op: "concat_channels", left: first, right: s });
        }
    }
    if xs.len() == 1 {
        return Ok(xs[0].clone());
    }
    let channels: Vec<usize> = xs.iter().map(|t| t.shape().c).collect();
    let total: usize = channels.iter().sum();
    let os = Shape::new(first.n, total, first.h, first.w);
    let plane = first.plane();
    let mut out = Vec::with_capacity(os.numel());
    for n in 0..first.n {
        for t in xs {
            let c = t.shape().c;
            out.extend_from_slice(&t.data()[n * c * plane..(n + 1) * c * plane]);
        }
    }
    let parents = xs.iter().map(|&t| t.clone()).collect();
    Ok(Tensor::from_op(os, out, parents, Concat { channels }))
}

struct PadReplicate {
    pad: usize,
}

impl Backward for PadReplicate {
    fn name(&self) -> &'static str {
        "pad_replicate"
    }

    fn backward(&self, out: &Tensor, g: &[Real], parents: &[Tensor]) -> Vec<Option<Vec<Real>>> {
        let s = parents[0].shape();
        let os = out.shape();
        let mut dx = vec![0.0; s.numel()];
        for p in 0..s.n * s.c {
            for y in 0..os.h {
                let sy = y.saturating_sub(self.pad).min(s.h - 1);
                for x in 0..os.w {
                    let sx = x.saturating_sub(self.pad).min(s.w - 1);
                    dx[p * s.plane() + sy * s.w + sx] += g[p * os.plane() + y * os.w + x];
                }
            }
        }
        vec![Some(dx)]
    }
}

/// Pads every plane by `pad` pixels, repeating the nearest edge value.
pub fn pad_replicate(x: &Tensor, pad: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.h == 0 || s.w == 0 {
        return Err(TensorError::Empty("pad_replicate"));
    }
    if pad == 0 {
        return Ok(x.clone());
    }
    let os = Shape::new(s.n, s.c, s.h + 2 * pad, s.w + 2 * pad);
    let mut out = Vec::with_capacity(os.numel());
    for p in 0..s.n * s.c {
        let src = &x.data()[p * s.plane()..(p + 1) * s.plane()];
        for y in 0..os.h {
            let sy = y.saturating_sub(pad).min(s.h - 1);
            for xx in 0..os.w {
                let sx = xx.saturating_sub(pad).min(s.w - 1);
                out.push(src[sy * s.w + sx]);
            }
        }
    }
    Ok(Tensor::from_op(os, out, vec![x.clone()], PadReplicate { pad }))
}
