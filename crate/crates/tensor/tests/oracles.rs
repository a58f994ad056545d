//! Scalar-loop reimplementations checked against the op kernels.

use drnet_tensor::ops;
use drnet_tensor::{Real, Shape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

fn random(shape: Shape, seed: u64) -> Tensor {
    let mut rng = SplitMix64::seed_from_u64(seed);
    Tensor::from_vec(shape, (0..shape.numel()).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

/// out[n, c, h*r + i, w*r + j] = in[n, c*r*r + i*r + j, h, w], written as a
/// scatter from the input side.
fn shuffle_oracle(x: &Tensor, r: usize) -> Vec<Real> {
    let s = x.shape();
    let (oc, oh, ow) = (s.c / (r * r), s.h * r, s.w * r);
    let mut out = vec![Real::NAN; s.n * oc * oh * ow];
    for n in 0..s.n {
        for c in 0..oc {
            for h in 0..s.h {
                for w in 0..s.w {
                    for i in 0..r {
                        for j in 0..r {
                            let v = x.at(n, c * r * r + i * r + j, h, w);
                            out[((n * oc + c) * oh + h * r + i) * ow + w * r + j] = v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Direct four-tap evaluation per output pixel with the half-pixel formula.
fn bilinear_oracle(x: &Tensor, f: usize) -> Vec<Real> {
    let s = x.shape();
    let (oh, ow) = (s.h * f, s.w * f);
    let src = |t: usize, size: usize| -> Real {
        let v = (t as Real + 0.5) / f as Real - 0.5;
        v.max(0.0).min((size - 1) as Real)
    };
    let mut out = Vec::new();
    for n in 0..s.n {
        for c in 0..s.c {
            for ty in 0..oh {
                for tx in 0..ow {
                    let (sy, sx) = (src(ty, s.h), src(tx, s.w));
                    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(s.h - 1), (x0 + 1).min(s.w - 1));
                    let (wy, wx) = (sy - y0 as Real, sx - x0 as Real);
                    let v = x.at(n, c, y0, x0) * (1.0 - wy) * (1.0 - wx)
                        + x.at(n, c, y0, x1) * (1.0 - wy) * wx
                        + x.at(n, c, y1, x0) * wy * (1.0 - wx)
                        + x.at(n, c, y1, x1) * wy * wx;
                    out.push(v);
                }
            }
        }
    }
    out
}

fn maxpool_oracle(x: &Tensor, k: usize, stride: usize, pad: usize) -> Vec<Real> {
    let s = x.shape();
    let oh = (s.h + 2 * pad - k) / stride + 1;
    let ow = (s.w + 2 * pad - k) / stride + 1;
    let mut out = Vec::new();
    for n in 0..s.n {
        for c in 0..s.c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut vals = Vec::new();
                    for y in 0..s.h {
                        for xx in 0..s.w {
                            let in_y = y + pad >= oy * stride && y + pad < oy * stride + k;
                            let in_x = xx + pad >= ox * stride && xx + pad < ox * stride + k;
                            if in_y && in_x {
                                vals.push(x.at(n, c, y, xx));
                            }
                        }
                    }
                    out.push(vals.into_iter().fold(Real::NEG_INFINITY, Real::max));
                }
            }
        }
    }
    out
}

#[test]
fn pixel_shuffle_matches_index_formula() {
    for (shape, r) in [(Shape::new(1, 4, 1, 1), 2), (Shape::new(2, 8, 3, 2), 2), (Shape::new(1, 32, 2, 3), 4)] {
        let x = random(shape, 7);
        let y = ops::pixel_shuffle(&x, r).unwrap();
        assert_eq!(y.data(), shuffle_oracle(&x, r).as_slice());
    }
}

#[test]
fn bilinear_matches_scalar_loop() {
    for f in [1, 2, 4] {
        let x = random(Shape::new(2, 3, 5, 7), 8);
        let y = ops::bilinear_upsample(&x, f).unwrap();
        let o = bilinear_oracle(&x, f);
        let err = y.data().iter().zip(&o).map(|(a, b)| (a - b).abs()).fold(0.0, Real::max);
        assert!(err < 1e-6, "factor {f}: {err}");
    }
}

#[test]
fn maxpool_matches_window_scan() {
    let x = random(Shape::new(1, 1, 4, 4), 9);
    let y = ops::maxpool2d(&x, 3, 2, 1).unwrap();
    assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
    assert_eq!(y.data(), maxpool_oracle(&x, 3, 2, 1).as_slice());
    let x = random(Shape::new(2, 3, 9, 7), 10);
    assert_eq!(ops::maxpool2d(&x, 3, 2, 1).unwrap().data(), maxpool_oracle(&x, 3, 2, 1).as_slice());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shuffle_is_a_permutation(n in 1usize..3, c in 1usize..4, h in 1usize..5, w in 1usize..5, r in 1usize..4, seed in any::<u64>()) {
        let x = random(Shape::new(n, c * r * r, h, w), seed);
        let y = ops::pixel_shuffle(&x, r).unwrap();
        let mut a = x.data().to_vec();
        let mut b = y.data().to_vec();
        a.sort_by(|p, q| p.partial_cmp(q).unwrap());
        b.sort_by(|p, q| p.partial_cmp(q).unwrap());
        prop_assert_eq!(a, b);

        // gradient map is the inverse permutation: pushing y back through it recovers x
        let leaf = x.to_leaf();
        let out = ops::pixel_shuffle(&leaf, r).unwrap();
        let weights = Tensor::from_vec(out.shape(), y.data().to_vec()).unwrap();
        ops::sum(&ops::mul(&out, &weights).unwrap()).backward().unwrap();
        prop_assert_eq!(leaf.grad().unwrap(), x.data().to_vec());
    }

    #[test]
    fn bilinear_stays_within_bounds(h in 1usize..6, w in 1usize..6, f in prop::sample::select(vec![1usize, 2, 4]), seed in any::<u64>()) {
        let x = random(Shape::new(1, 2, h, w), seed);
        let lo = x.data().iter().cloned().fold(Real::INFINITY, Real::min);
        let hi = x.data().iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let y = ops::bilinear_upsample(&x, f).unwrap();
        prop_assert!(y.data().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn same_padding_preserves_shape(k in prop::sample::select(vec![1usize, 3, 5, 7]), h in 1usize..9, w in 1usize..9) {
        let x = Tensor::zeros((1, 2, h, w));
        let wt = Tensor::zeros((3, 2, k, k));
        let y = ops::conv2d(&x, &wt, None, 1, (k - 1) / 2).unwrap();
        prop_assert_eq!(y.shape(), Shape::new(1, 3, h, w));
    }

    #[test]
    fn ops_are_deterministic(seed in any::<u64>()) {
        let x = random(Shape::new(2, 4, 6, 6), seed);
        let w = random(Shape::new(4, 4, 3, 3), seed ^ 1);
        let run = || {
            let y = ops::conv2d(&x, &w, None, 1, 1).unwrap();
            let y = ops::maxpool2d(&ops::relu(&y), 3, 2, 1).unwrap();
            ops::bilinear_upsample(&ops::pixel_shuffle(&y, 2).unwrap(), 2).unwrap()
        };
        let (a, b) = (run(), run());
        prop_assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
