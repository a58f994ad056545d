#![allow(dead_code)]

use drnet::tensor::{Real, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

pub fn uniform(shape: impl Into<Shape>, lo: Real, hi: Real, seed: u64) -> Tensor {
    let shape = shape.into();
    let mut rng = SplitMix64::seed_from_u64(seed);
    Tensor::from_vec(shape, (0..shape.numel()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Row-major 2-D view of one plane.
pub fn plane(t: &Tensor, n: usize, c: usize) -> Vec<Vec<Real>> {
    let s = t.shape();
    (0..s.h).map(|r| (0..s.w).map(|q| t.at(n, c, r, q)).collect()).collect()
}

/// Sobel/8 with clamped (replicated) borders, straight from the stencil.
pub fn sobel_oracle(x: &[Vec<Real>]) -> (Vec<Vec<Real>>, Vec<Vec<Real>>) {
    let (h, w) = (x.len() as isize, x[0].len() as isize);
    let at = |r: isize, c: isize| x[r.clamp(0, h - 1) as usize][c.clamp(0, w - 1) as usize];
    let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let mut gx = vec![vec![0.0; w as usize]; h as usize];
    let mut gy = gx.clone();
    for r in 0..h {
        for c in 0..w {
            let (mut sx, mut sy) = (0.0, 0.0);
            for i in 0..3 {
                for j in 0..3 {
                    let v = at(r + i as isize - 1, c + j as isize - 1);
                    sx += kx[i][j] * v;
                    sy += kx[j][i] * v;
                }
            }
            gx[r as usize][c as usize] = sx / 8.0;
            gy[r as usize][c as usize] = sy / 8.0;
        }
    }
    (gx, gy)
}

/// Per-pixel loss terms of one (d, g) pair of planes: (depth, grad, normal) sums.
pub fn loss_terms_oracle(d: &[Vec<Real>], g: &[Vec<Real>], alpha: Real) -> (Real, Real, Real) {
    let e: Vec<Vec<Real>> = d.iter().zip(g).map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect()).collect();
    let (ex, ey) = sobel_oracle(&e);
    let (dx, dy) = sobel_oracle(d);
    let (gx, gy) = sobel_oracle(g);
    let (mut depth, mut grad, mut normal) = (0.0, 0.0, 0.0);
    for r in 0..d.len() {
        for c in 0..d[0].len() {
            depth += (e[r][c] + alpha).ln();
            grad += (ex[r][c].abs() + alpha).ln() + (ey[r][c].abs() + alpha).ln();
            let nd = [-dx[r][c], -dy[r][c], 1.0];
            let ng = [-gx[r][c], -gy[r][c], 1.0];
            let dot: Real = nd.iter().zip(&ng).map(|(a, b)| a * b).sum();
            let len = |v: &[Real; 3]| v.iter().map(|a| a * a).sum::<Real>().sqrt();
            normal += 1.0 - dot / (len(&nd) * len(&ng));
        }
    }
    (depth, grad, normal)
}

/// Mean of the loss terms over a batch of single-channel maps.
pub fn loss_oracle(d: &Tensor, g: &Tensor, alpha: Real) -> (Real, Real, Real) {
    let s = d.shape();
    let mut acc = (0.0, 0.0, 0.0);
    for n in 0..s.n {
        let t = loss_terms_oracle(&plane(d, n, 0), &plane(g, n, 0), alpha);
        acc = (acc.0 + t.0, acc.1 + t.1, acc.2 + t.2);
    }
    let count = (s.n * s.h * s.w) as Real;
    (acc.0 / count, acc.1 / count, acc.2 / count)
}

/// Block-mean downsampling.
pub fn pool_oracle(g: &Tensor, oh: usize, ow: usize) -> Tensor {
    let s = g.shape();
    let (fh, fw) = (s.h / oh, s.w / ow);
    let mut out = Vec::new();
    for n in 0..s.n {
        for c in 0..s.c {
            for r in 0..oh {
                for q in 0..ow {
                    let mut sum = 0.0;
                    for i in 0..fh {
                        for j in 0..fw {
                            sum += g.at(n, c, r * fh + i, q * fw + j);
                        }
                    }
                    out.push(sum / (fh * fw) as Real);
                }
            }
        }
    }
    Tensor::from_vec((s.n, s.c, oh, ow), out).unwrap()
}

/// Half-pixel-center bilinear upsampling, one output pixel at a time.
pub fn bilinear_oracle(x: &Tensor, f: usize) -> Tensor {
    let s = x.shape();
    let src = |t: usize, size: usize| -> (usize, usize, Real) {
        let pos = ((t as Real + 0.5) / f as Real - 0.5).clamp(0.0, (size - 1) as Real);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(size - 1);
        (lo, hi, pos - lo as Real)
    };
    let mut out = Vec::new();
    for n in 0..s.n {
        for c in 0..s.c {
            for r in 0..s.h * f {
                let (r0, r1, wr) = src(r, s.h);
                for q in 0..s.w * f {
                    let (c0, c1, wc) = src(q, s.w);
                    let top = x.at(n, c, r0, c0) * (1.0 - wc) + x.at(n, c, r0, c1) * wc;
                    let bot = x.at(n, c, r1, c0) * (1.0 - wc) + x.at(n, c, r1, c1) * wc;
                    out.push(top * (1.0 - wr) + bot * wr);
                }
            }
        }
    }
    Tensor::from_vec((s.n, s.c, s.h * f, s.w * f), out).unwrap()
}
