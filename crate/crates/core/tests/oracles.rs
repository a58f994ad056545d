//! Library results against direct scalar-loop computations.

mod common;

use common::*;
use drnet::backbone::Backbone;
use drnet::config::{BackboneConfig, DecoderConfig, LossConfig};
use drnet::decoder::{level_factor, DepthDecoder, DepthLevel, DepthPyramid, DrnetDecoder};
use drnet::layers::{seeded, Module};
use drnet::loss::{depth_loss, downsample_target, grad_loss, normal_loss, sobel_gradients, total_loss};
use drnet::metrics::evaluate_metrics;
use drnet::tensor::ops::{self, Mode};
use drnet::tensor::{Real, Tensor};

const EXACT: Real = 1e-10;

fn close(a: Real, b: Real, tol: Real) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn sobel_matches_stencil_loop() {
    let x = uniform((1, 1, 6, 7), -2.0, 2.0, 1);
    let (gx, gy) = sobel_gradients(&x).unwrap();
    let (ox, oy) = sobel_oracle(&plane(&x, 0, 0));
    for r in 0..6 {
        for c in 0..7 {
            assert!(close(gx.at(0, 0, r, c), ox[r][c], EXACT));
            assert!(close(gy.at(0, 0, r, c), oy[r][c], EXACT));
        }
    }
}

#[test]
fn sobel_of_transpose_swaps_components() {
    let x = uniform((1, 1, 5, 5), 0.0, 3.0, 2);
    let xt = Tensor::from_vec((1, 1, 5, 5), (0..25).map(|i| x.at(0, 0, i % 5, i / 5)).collect()).unwrap();
    let (gx, gy) = sobel_gradients(&x).unwrap();
    let (tx, ty) = sobel_gradients(&xt).unwrap();
    for r in 0..5 {
        for c in 0..5 {
            assert!(close(tx.at(0, 0, r, c), gy.at(0, 0, c, r), EXACT));
            assert!(close(ty.at(0, 0, r, c), gx.at(0, 0, c, r), EXACT));
        }
    }
}

#[test]
fn unit_ramp_has_unit_interior_gradient() {
    let x = Tensor::from_vec((1, 1, 5, 6), (0..30).map(|i| (i % 6) as Real).collect()).unwrap();
    let (gx, gy) = sobel_gradients(&x).unwrap();
    for r in 0..5 {
        for c in 1..5 {
            assert!(close(gx.at(0, 0, r, c), 1.0, EXACT));
            assert!(gy.at(0, 0, r, c).abs() < EXACT);
        }
    }
}

#[test]
fn loss_terms_match_loops_5x5() {
    for seed in 0..4 {
        let d = uniform((2, 1, 5, 5), 0.5, 8.0, 10 + seed);
        let g = uniform((2, 1, 5, 5), 0.5, 8.0, 20 + seed);
        let (od, og, on) = loss_oracle(&d, &g, 0.5);
        assert!(close(depth_loss(&d, &g, 0.5).unwrap().item().unwrap(), od, EXACT));
        assert!(close(grad_loss(&d, &g, 0.5).unwrap().item().unwrap(), og, EXACT));
        assert!(close(normal_loss(&d, &g).unwrap().item().unwrap(), on, EXACT));
    }
}

#[test]
fn normal_loss_of_ramp_against_plane() {
    let d = Tensor::from_vec((1, 1, 4, 4), (0..16).map(|i| (i % 4) as Real).collect()).unwrap();
    let g = Tensor::full((1, 1, 4, 4), 2.0);
    // interior columns see slope 1, border columns slope 1/2
    let interior = 1.0 - 1.0 / 2.0_f64.sqrt();
    let border = 1.0 - 1.0 / 1.25_f64.sqrt();
    let expect = (8.0 * interior + 8.0 * border) / 16.0;
    assert!(close(normal_loss(&d, &g).unwrap().item().unwrap(), expect, EXACT));
}

#[test]
fn total_loss_matches_loops_on_a_pyramid() {
    let g = uniform((2, 1, 8, 8), 0.5, 9.0, 30);
    let sizes = [(5, 2), (4, 4), (0, 8)];
    let levels: Vec<DepthLevel> = sizes
        .iter()
        .enumerate()
        .map(|(i, &(level, s))| DepthLevel { level, map: uniform((2, 1, s, s), 0.5, 9.0, 31 + i as u64) })
        .collect();
    let pyramid = DepthPyramid { levels };
    let cfg = LossConfig { alpha: 0.5, level_weights: [1.0, 0.3, 0.3, 0.3, 0.7, 0.2] };

    let mut expect = 0.0;
    for lvl in &pyramid.levels {
        let s = lvl.map.shape();
        let target = pool_oracle(&g, s.h, s.w);
        let (a, b, c) = loss_oracle(&lvl.map, &target, cfg.alpha);
        expect += cfg.level_weights[lvl.level] * (a + b + c);
    }
    let (t, breakdown) = total_loss(&pyramid, &g, &cfg, true).unwrap();
    assert!(close(t.item().unwrap(), expect, EXACT));
    assert_eq!(breakdown.levels.len(), 3);

    let (only0, _) = total_loss(&pyramid, &g, &cfg, false).unwrap();
    let (a, b, c) = loss_oracle(&pyramid.levels[2].map, &g, cfg.alpha);
    assert!(close(only0.item().unwrap(), a + b + c, EXACT));
}

#[test]
fn downsampled_target_is_block_mean() {
    let g = uniform((1, 1, 16, 16), 0.5, 9.0, 40);
    for s in [1, 2, 4, 8, 16] {
        let lib = downsample_target(&g, s, s).unwrap();
        let want = pool_oracle(&g, s, s);
        assert!(lib.data().iter().zip(want.data()).all(|(a, b)| close(*a, *b, EXACT)));
    }
}

#[test]
fn bilinear_matches_pixel_loop() {
    let x = uniform((1, 2, 3, 5), -1.0, 1.0, 50);
    for f in [1, 2, 4] {
        let lib = ops::bilinear_upsample(&x, f).unwrap();
        let want = bilinear_oracle(&x, f);
        assert_eq!(lib.shape(), want.shape());
        assert!(lib.data().iter().zip(want.data()).all(|(a, b)| close(*a, *b, EXACT)));
    }
}

#[test]
fn zero_corrections_give_the_bilinear_chain() {
    let bb = Backbone::new(&BackboneConfig::default(), &mut seeded(0)).unwrap();
    let f = bb.forward(&uniform((1, 3, 64, 64), 0.0, 1.0, 60), Mode::Eval).unwrap();
    let mut dec = DrnetDecoder::new(&DecoderConfig::default(), &BackboneConfig::default(), &mut seeded(1)).unwrap();
    for c in dec.corrections_mut() {
        c.visit_params_mut(&mut |p| {
            let n = p.numel();
            p.set_values(vec![0.0; n]).unwrap();
        });
    }
    let p = dec.forward(&f, Mode::Eval).unwrap();
    let mut expect = p.get(5).unwrap().clone();
    for level in (0..5).rev() {
        expect = bilinear_oracle(&expect, level_factor(level));
        let got = p.get(level).unwrap();
        assert!(got.data().iter().zip(expect.data()).all(|(a, b)| (a - b).abs() < 1e-6));
    }
}

#[test]
fn constant_coarse_depth_stays_constant() {
    let bb = Backbone::new(&BackboneConfig::default(), &mut seeded(0)).unwrap();
    let f = bb.forward(&uniform((1, 3, 64, 64), 0.0, 1.0, 61), Mode::Eval).unwrap();
    let mut dec = DrnetDecoder::new(&DecoderConfig::default(), &BackboneConfig::default(), &mut seeded(1)).unwrap();
    dec.visit_params_mut(&mut |p| {
        let n = p.numel();
        if p.name() == "decoder.head5.bias" {
            p.set_values(vec![2.5]).unwrap();
        } else if p.name().starts_with("decoder.corr.") || p.name() == "decoder.head5.weight" {
            p.set_values(vec![0.0; n]).unwrap();
        }
    });
    let p = dec.forward(&f, Mode::Eval).unwrap();
    for lvl in &p.levels {
        assert!(lvl.map.data().iter().all(|&v| (v - 2.5).abs() < 1e-12), "level {}", lvl.level);
    }
}

#[test]
fn metric_examples() {
    let g = Tensor::from_vec((1, 1, 1, 4), vec![1.0, 2.0, 4.0, 0.0]).unwrap();
    let d = Tensor::from_vec((1, 1, 1, 4), vec![1.2, 3.0, 4.0, 7.0]).unwrap();
    let m = evaluate_metrics(&d, &g).unwrap();
    let rmse = ((0.04 + 1.0 + 0.0) / 3.0 as Real).sqrt();
    let log10 = ((1.2f64.log10()).abs() + (1.5f64.log10()).abs()) / 3.0;
    assert!(close(m.rmse, rmse, EXACT));
    assert!(close(m.log10, log10, EXACT));
    // ratios 1.2, 1.5, 1.0
    assert!(close(m.delta1, 2.0 / 3.0, EXACT));
    assert!(close(m.delta2, 1.0, EXACT));

    let d = Tensor::from_vec((1, 1, 1, 2), vec![0.0, 50.0]).unwrap();
    let g = Tensor::from_vec((1, 1, 1, 2), vec![1.0, 10.0]).unwrap();
    let m = evaluate_metrics(&d, &g).unwrap();
    // clamped to 1e-3 and 10
    assert!(close(m.rmse, (0.999f64 * 0.999 / 2.0).sqrt(), EXACT));
    assert!(close(m.delta1, 0.5, EXACT));
}

#[test]
fn threshold_is_strict() {
    let g = Tensor::full((1, 1, 1, 1), 1.0);
    let d = Tensor::full((1, 1, 1, 1), 1.25);
    assert_eq!(evaluate_metrics(&d, &g).unwrap().delta1, 0.0);
}
