use drnet::checkpoint::{self, sidecar_path};
use drnet::data::Dataset;
use drnet::error::DrnetError;
use drnet::layers::Module;
use drnet::model::DepthModel;
use drnet::optim::AdamAmsgrad;
use drnet::tensor::container;
use drnet::tensor::ops::{self, RunningStats};
use drnet::tensor::{Parameter, Real, Shape, Tensor};
use drnet::train::{evaluate, Trainer};
use drnet::RunConfig;

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.train.batch_size = 2;
    cfg.train.lr = 1e-3;
    cfg
}

fn params(m: &impl Module) -> Vec<(String, Vec<Real>)> {
    let mut out = Vec::new();
    m.visit_params(&mut |p| out.push((p.name().to_string(), p.values().to_vec())));
    out
}

fn stats(m: &impl Module) -> Vec<(String, Vec<Real>, Vec<Real>)> {
    let mut out = Vec::new();
    m.visit_stats(&mut |name, s| out.push((name.to_string(), s.mean(), s.var())));
    out
}

#[test]
fn training_is_deterministic() {
    let data = Dataset::synthetic(3, 5, 64, 64).unwrap();
    let mut cfg = small_config();
    cfg.data.hflip = true;
    let run = || {
        let mut t = Trainer::new(&cfg).unwrap();
        let reports: Vec<_> = (0..2).map(|_| t.train_epoch(&data).unwrap()).collect();
        (reports, params(&t.model), stats(&t.model))
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    assert_eq!(a.0[0].batches, 3);
}

#[test]
fn checkpoint_round_trip_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.drt");
    let data = Dataset::synthetic(4, 4, 64, 64).unwrap();
    let cfg = small_config();

    let mut t = Trainer::new(&cfg).unwrap();
    t.train_epoch(&data).unwrap();
    checkpoint::save(&path, &t.model, &t.optim, &t.config).unwrap();
    assert!(sidecar_path(&path).exists());

    let loaded = checkpoint::load(&path, Some(&cfg)).unwrap();
    assert_eq!(params(&loaded.model), params(&t.model));
    assert_eq!(stats(&loaded.model), stats(&t.model));
    assert_eq!(loaded.optim.step_count(), t.optim.step_count());
    let (rgb, _) = data.batch(&[0, 1]).unwrap();
    assert_eq!(loaded.model.predict(&rgb).unwrap().data(), t.model.predict(&rgb).unwrap().data());

    // one more epoch from the reloaded state equals continuing in memory
    let mut resumed = Trainer::from_parts(loaded.model, loaded.optim, loaded.config, 1);
    let r1 = resumed.train_epoch(&data).unwrap();
    let r2 = t.train_epoch(&data).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(params(&resumed.model), params(&t.model));
}

#[test]
fn checkpoint_rejects_other_architectures_and_missing_entries() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.drt");
    let cfg = small_config();
    let t = Trainer::new(&cfg).unwrap();
    checkpoint::save(&path, &t.model, &t.optim, &t.config).unwrap();

    let mut other = cfg.clone();
    other.decoder.correction_kernel = 3;
    assert!(matches!(
        checkpoint::load(&path, Some(&other)),
        Err(DrnetError::ConfigMismatch { section: "decoder", .. })
    ));
    let mut other = cfg.clone();
    other.backbone.widths[4] = 64;
    assert!(matches!(
        checkpoint::load(&path, Some(&other)),
        Err(DrnetError::ConfigMismatch { section: "backbone", .. })
    ));

    let mut entries = container::load(&path).unwrap();
    entries.retain(|e| e.name != "decoder.head5.weight");
    container::save(&path, &entries).unwrap();
    match checkpoint::load(&path, None) {
        Err(DrnetError::MissingEntry(name)) => assert_eq!(name, "decoder.head5.weight"),
        other => panic!("expected MissingEntry, got {:?}", other.err()),
    }
}

#[test]
fn tiny_step_lowers_the_batch_loss() {
    let data = Dataset::synthetic(5, 2, 64, 64).unwrap();
    let (rgb, depth) = data.batch(&[0, 1]).unwrap();
    let mut cfg = RunConfig::default();
    cfg.train.lr = 1e-6;
    let mut t = Trainer::new(&cfg).unwrap();
    let before = t.train_step(&rgb, &depth).unwrap().total;
    let after = t.train_step(&rgb, &depth).unwrap().total;
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn vmax_never_decreases() {
    let data = Dataset::synthetic(6, 4, 64, 64).unwrap();
    let mut t = Trainer::new(&small_config()).unwrap();
    let names = ["decoder.head5.weight", "decoder.corr.0.weight", "backbone.layer0.conv.weight"];
    let mut prev: Vec<Vec<Real>> = Vec::new();
    for step in 0..4 {
        let (rgb, depth) = data.batch(&[step % 4]).unwrap();
        t.train_step(&rgb, &depth).unwrap();
        let now: Vec<Vec<Real>> = names.iter().map(|n| t.optim.moments(n).expect(n).vmax.clone()).collect();
        for (p, n) in prev.iter().zip(&now) {
            assert!(p.iter().zip(n).all(|(a, b)| b >= a));
        }
        for (n, name) in now.iter().zip(names) {
            let v = &t.optim.moments(name).unwrap().v;
            assert!(n.iter().zip(v).all(|(m, v)| m >= v));
        }
        prev = now;
    }
}

#[test]
fn frozen_backbone_only_trains_the_decoder() {
    let data = Dataset::synthetic(7, 2, 64, 64).unwrap();
    let mut cfg = small_config();
    cfg.train.freeze_backbone = true;
    let mut t = Trainer::new(&cfg).unwrap();
    let before = params(&t.model);
    let stats_before = stats(&t.model.backbone);
    t.train_epoch(&data).unwrap();
    for ((name, a), (_, b)) in before.iter().zip(params(&t.model)) {
        if DepthModel::is_backbone_param(name) {
            assert_eq!(*a, b, "{name} moved");
            assert!(t.optim.moments(name).is_none());
        } else {
            assert_ne!(*a, b, "{name} did not move");
        }
    }
    assert_eq!(stats_before, stats(&t.model.backbone));
}

struct Single(Parameter);

impl Module for Single {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter)) {
        f(&self.0)
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.0)
    }

    fn visit_stats<'a>(&'a self, _f: &mut dyn FnMut(&'a str, &'a RunningStats)) {}
}

#[test]
fn amsgrad_matches_scalar_recurrence() {
    let mut cfg = RunConfig::default().train;
    cfg.lr = 1e-2;
    cfg.weight_decay = 0.1;
    let mut opt = AdamAmsgrad::new(&cfg);
    let init = [0.5, -1.0, 2.0];
    let mut m = Single(Parameter::new("w", Shape::vector(3), vec![3], init.to_vec()).unwrap());
    let grads = [[1.0, -2.0, 0.5], [-3.0, 0.1, 0.5], [0.2, 0.2, -4.0], [0.0, 1.0, 1.0]];

    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut w = init.to_vec();
    let (mut mm, mut vv, mut vmax) = ([0.0; 3], [0.0; 3], [0.0f64; 3]);
    for (t, g) in grads.iter().enumerate() {
        let gt = Tensor::from_vec(Shape::vector(3), g.to_vec()).unwrap();
        ops::sum(&ops::mul(m.0.tensor(), &gt).unwrap()).backward().unwrap();
        opt.step(&mut m, &|_| true).unwrap();
        m.0.zero_grad();

        let t = (t + 1) as i32;
        for i in 0..3 {
            let gi = g[i] + 0.1 * w[i];
            mm[i] = b1 * mm[i] + (1.0 - b1) * gi;
            vv[i] = b2 * vv[i] + (1.0 - b2) * gi * gi;
            vmax[i] = vmax[i].max(vv[i]);
            let mh = mm[i] / (1.0 - b1.powi(t));
            let vh = vmax[i] / (1.0 - b2.powi(t));
            w[i] -= 1e-2 * mh / (vh.sqrt() + eps);
        }
        for (a, b) in m.0.values().iter().zip(&w) {
            assert!((a - b).abs() < 1e-6, "step {t}: {a} vs {b}");
        }
    }
    assert_eq!(opt.step_count(), 4);
}

#[test]
fn step_without_gradients_fails_cleanly() {
    let mut t = Trainer::new(&small_config()).unwrap();
    let before = params(&t.model);
    assert!(matches!(t.optim.step(&mut t.model, &|_| true), Err(DrnetError::MissingGradient(_))));
    assert_eq!(before, params(&t.model));
    assert_eq!(t.optim.step_count(), 0);
}

#[test]
fn evaluation_counts_every_valid_pixel() {
    let data = Dataset::synthetic(8, 3, 64, 64).unwrap();
    let model = DepthModel::new(&Default::default(), &Default::default(), 0).unwrap();
    let a = evaluate(&model, &data, 1).unwrap();
    let b = evaluate(&model, &data, 3).unwrap();
    assert!((a.rmse - b.rmse).abs() < 1e-12);
    assert_eq!(a.delta1, b.delta1);
}

#[test]
fn every_decoder_variant_takes_a_step() {
    let data = Dataset::synthetic(9, 2, 64, 64).unwrap();
    let (rgb, depth) = data.batch(&[0, 1]).unwrap();
    for (tweak, supervised) in [
        ((|_| {}) as fn(&mut RunConfig), 6),
        (|c| c.decoder.second_branch = false, 1),
        (|c| c.decoder.auxiliary_outputs = false, 1),
        (|c| c.decoder.diagonal_connections = false, 6),
        (|c| c.decoder.kind = "fullres".into(), 1),
    ] {
        let mut cfg = small_config();
        tweak(&mut cfg);
        let mut t = Trainer::new(&cfg).unwrap();
        let b = t.train_step(&rgb, &depth).unwrap();
        assert!(b.total.is_finite());
        assert_eq!(b.levels.len(), supervised);
    }
}
