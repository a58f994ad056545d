use crate::error::{Result, TensorError};
use crate::tensor::{Backward, Real, Shape, Tensor};

/// Source taps for one axis: `(lo, hi, weight of hi)` per target index.
///
/// Half-pixel centers: `s = (t + 0.5) / factor - 0.5`, clamped to
/// `[0, size - 1]`.
pub fn axis_taps(size: usize, factor: usize) -> Vec<(usize, usize, Real)> {
    (0..size * factor)
        .map(|t| {
            let s = ((t as Real + 0.5) / factor as Real - 0.5).clamp(0.0, (size - 1) as Real);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(size - 1);
            (lo, hi, s - lo as Real)
        })
        .collect()
}

struct Bilinear {
    ty: Vec<(usize, usize, Real)>,
    tx: Vec<(usize, usize, Real)>,
}

impl Backward for Bilinear {
    fn name(&self) -> &'static str {
        "bilinear_upsample"
    }

    fn backward(&self, out: &Tensor, g: &[Real], parents: &[Tensor]) -> Vec<Option<Vec<Real>>> {
        let s = parents[0].shape();
        let os = out.shape();
        let mut dx = vec![0.0; s.numel()];
        let mut tmp = vec![0.0; s.h * os.w];
        for p in 0..s.n * s.c {
            let gp = &g[p * os.plane()..(p + 1) * os.plane()];
            tmp.fill(0.0);
            for (oy, &(y0, y1, wy)) in self.ty.iter().enumerate() {
                let grow = &gp[oy * os.w..(oy + 1) * os.w];
                for (ox, gv) in grow.iter().enumerate() {
                    tmp[y0 * os.w + ox] += gv * (1.0 - wy);
                    tmp[y1 * os.w + ox] += gv * wy;
                }
            }
            let dst = &mut dx[p * s.plane()..(p + 1) * s.plane()];
            for y in 0..s.h {
                let trow = &tmp[y * os.w..(y + 1) * os.w];
                let drow = &mut dst[y * s.w..(y + 1) * s.w];
                for (ox, &(x0, x1, wx)) in self.tx.iter().enumerate() {
                    drow[x0] += trow[ox] * (1.0 - wx);
                    drow[x1] += trow[ox] * wx;
                }
            }
        }
        vec![Some(dx)]
    }
}

/// Bilinear upsampling by an integer factor in {1, 2, 4}.
pub fn bilinear_upsample(x: &Tensor, factor: usize) -> Result<Tensor> {
    if !matches!(factor, 1 | 2 | 4) {
        return Err(TensorError::Parameter { op: "bilinear_upsample", msg: format!("unsupported factor {factor}, expected 1, 2 or 4") });
    }
    let s = x.shape();
    if s.h == 0 || s.w == 0 {
        return Err(TensorError::Empty("bilinear_upsample"));
    }
    if factor == 1 {
        return Ok(x.clone());
    }
    let os = Shape::new(s.n, s.c, s.h * factor, s.w * factor);
    let ty = axis_taps(s.h, factor);
    let tx = axis_taps(s.w, factor);
    let mut out = vec![0.0; os.numel()];
    // horizontal pass per source row, then vertical blend
    let mut tmp = vec![0.0; s.h * os.w];
    for p in 0..s.n * s.c {
        let src = &x.data()[p * s.plane()..(p + 1) * s.plane()];
        for y in 0..s.h {
            let srow = &src[y * s.w..(y + 1) * s.w];
            let trow = &mut tmp[y * os.w..(y + 1) * os.w];
            for (v, &(x0, x1, wx)) in trow.iter_mut().zip(&tx) {
                *v = srow[x0] * (1.0 - wx) + srow[x1] * wx;
            }
        }
        let dst = &mut out[p * os.plane()..(p + 1) * os.plane()];
        for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
            let (r0, r1) = (&tmp[y0 * os.w..(y0 + 1) * os.w], &tmp[y1 * os.w..(y1 + 1) * os.w]);
            for ((d, a), b) in dst[oy * os.w..(oy + 1) * os.w].iter_mut().zip(r0).zip(r1) {
                *d = a * (1.0 - wy) + b * wy;
            }
        }
    }
    Ok(Tensor::from_op(os, out, vec![x.clone()], Bilinear { ty, tx }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_pixel_row() {
        let x = Tensor::from_vec((1, 1, 1, 2), vec![0.0, 2.0]).unwrap();
        let y = bilinear_upsample(&x, 2).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 4));
        assert_eq!(&y.data()[..4], &[0.0, 0.5, 1.5, 2.0]);
        assert_eq!(&y.data()[4..], &[0.0, 0.5, 1.5, 2.0]);
    }

    #[test]
    fn constant_preserved() {
        let x = Tensor::full((1, 2, 3, 5), 2.25);
        for f in [1, 2, 4] {
            assert!(bilinear_upsample(&x, f).unwrap().data().iter().all(|&v| v == 2.25));
        }
    }

    #[test]
    fn unsupported_factor() {
        assert!(bilinear_upsample(&Tensor::zeros((1, 1, 2, 2)), 3).is_err());
    }
}
