//! Latency and activation-memory comparison of the DRNet decoder against the
//! full-resolution interpolation decoder on one shared backbone.
//!
//! The headline numbers are decoder-only: backbone features are computed
//! once and both decoders run on the same tensors. End-to-end numbers
//! (backbone included) are reported alongside. Memory is counted in live
//! tensor elements, not bytes of process memory.

use std::fmt::Write as _;
use std::time::Instant;

use drnet_tensor::ops::Mode;
use drnet_tensor::{no_grad, track_peak_elements, Real, Tensor};
use serde::{Deserialize, Serialize};

use crate::backbone::FeaturePyramid;
use crate::config::{DecoderConfig, RunConfig};
use crate::data::synth_scene;
use crate::decoder::DepthPyramid;
use crate::error::{DrnetError, Result};
use crate::layers::Module;
use crate::model::DepthModel;

pub const MIN_ITERS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub median_ms: Real,
    pub p10_ms: Real,
    pub p90_ms: Real,
    pub samples: usize,
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[Real], q: Real) -> Real {
    let rank = (q * (sorted.len() - 1) as Real).round() as usize;
    sorted[rank]
}

impl LatencyStats {
    pub fn from_samples(mut ms: Vec<Real>) -> Self {
        ms.sort_by(|a, b| a.total_cmp(b));
        let n = ms.len();
        let median = if n % 2 == 1 { ms[n / 2] } else { 0.5 * (ms[n / 2 - 1] + ms[n / 2]) };
        LatencyStats { median_ms: median, p10_ms: percentile(&ms, 0.1), p90_ms: percentile(&ms, 0.9), samples: n }
    }
}

/// Times `iters` gradient-free calls after `warmup` untimed ones.
pub fn time_forward<T>(mut f: impl FnMut() -> Result<T>, warmup: usize, iters: usize) -> Result<LatencyStats> {
    if iters < MIN_ITERS {
        return Err(DrnetError::config("bench.iters", format!("must be >= {MIN_ITERS}")));
    }
    no_grad(|| {
        for _ in 0..warmup {
            f()?;
        }
        let mut ms = Vec::with_capacity(iters);
        for _ in 0..iters {
            let start = Instant::now();
            let out = f()?;
            ms.push(start.elapsed().as_secs_f64() * 1e3);
            drop(out);
        }
        Ok(LatencyStats::from_samples(ms))
    })
}

/// Peak live elements allocated during one gradient-free call.
pub fn peak_activations<T>(f: impl FnOnce() -> Result<T>) -> Result<usize> {
    let (out, peak) = no_grad(|| track_peak_elements(f));
    out?;
    Ok(peak)
}

fn assert_no_grad(p: &DepthPyramid) {
    assert!(p.levels.iter().all(|l| !l.map.requires_grad()), "benchmark output requires grad");
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub warmup: usize,
    pub iters: usize,
    /// Batch sizes for the throughput sweep (end-to-end).
    pub batch_sizes: Vec<usize>,
    /// Sweep entries whose projected activation bytes exceed this are skipped.
    pub max_activation_bytes: u64,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { warmup: 3, iters: 20, batch_sizes: vec![1, 4, 16], max_activation_bytes: 1 << 30, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub batch_size: usize,
    /// `None` when skipped for the memory budget.
    pub images_per_sec: Option<Real>,
    pub projected_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderBench {
    pub kind: String,
    pub decoder_params: usize,
    pub total_params: usize,
    pub decoder_latency: LatencyStats,
    pub end_to_end_latency: LatencyStats,
    /// Images/sec at batch 1, end-to-end.
    pub fps_bs1: Real,
    pub decoder_peak_elements: usize,
    pub end_to_end_peak_elements: usize,
    pub sweep: Vec<Throughput>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    /// fullres / drnet decoder median latency
    pub speedup: Real,
    /// fullres / drnet decoder peak elements
    pub memory: Real,
    pub end_to_end_speedup: Real,
    pub end_to_end_memory: Real,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionBench {
    pub resolution: usize,
    pub drnet: DecoderBench,
    pub fullres: DecoderBench,
    pub ratios: Ratios,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: RunConfig,
    pub options: BenchOptions,
    pub results: Vec<ResolutionBench>,
}

impl BenchReport {
    pub fn get(&self, resolution: usize) -> Option<&ResolutionBench> {
        self.results.iter().find(|r| r.resolution == resolution)
    }

    /// Whether the decoder memory ratio at `hi` strictly exceeds the one at
    /// `lo`, compared exactly on the integer element counts.
    pub fn memory_ratio_grows(&self, lo: usize, hi: usize) -> Option<bool> {
        let (a, b) = (self.get(lo)?, self.get(hi)?);
        let lhs = b.fullres.decoder_peak_elements as u128 * a.drnet.decoder_peak_elements as u128;
        let rhs = a.fullres.decoder_peak_elements as u128 * b.drnet.decoder_peak_elements as u128;
        Some(lhs > rhs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>5} {:<8} {:>11} {:>11} {:>11} {:>9} {:>13} {:>13} {:>9}",
            "res", "decoder", "dec ms p50", "dec ms p10", "dec ms p90", "e2e fps", "dec peak el", "e2e peak el", "params"
        );
        for r in &self.results {
            for d in [&r.drnet, &r.fullres] {
                let _ = writeln!(
                    out,
                    "{:>5} {:<8} {:>11.3} {:>11.3} {:>11.3} {:>9.2} {:>13} {:>13} {:>9}",
                    r.resolution,
                    d.kind,
                    d.decoder_latency.median_ms,
                    d.decoder_latency.p10_ms,
                    d.decoder_latency.p90_ms,
                    d.fps_bs1,
                    d.decoder_peak_elements,
                    d.end_to_end_peak_elements,
                    d.decoder_params
                );
            }
            let q = &r.ratios;
            let _ = writeln!(
                out,
                "{:>5} {:<8} speedup {:.2}x  memory {:.2}x  (end-to-end {:.2}x / {:.2}x)",
                r.resolution, "ratio", q.speedup, q.memory, q.end_to_end_speedup, q.end_to_end_memory
            );
        }
        let sweep_sizes: Vec<usize> = self.options.batch_sizes.clone();
        if !sweep_sizes.is_empty() {
            let _ = writeln!(out);
            let _ = write!(out, "{:>5} {:<8}", "res", "img/s");
            for bs in &sweep_sizes {
                let _ = write!(out, " {:>10}", format!("bs {bs}"));
            }
            let _ = writeln!(out);
            for r in &self.results {
                for d in [&r.drnet, &r.fullres] {
                    let _ = write!(out, "{:>5} {:<8}", r.resolution, d.kind);
                    for t in &d.sweep {
                        match t.images_per_sec {
                            Some(v) => {
                                let _ = write!(out, " {v:>10.2}");
                            }
                            None => {
                                let _ = write!(out, " {:>10}", "skipped");
                            }
                        }
                    }
                    let _ = writeln!(out);
                }
            }
        }
        out
    }
}

fn bench_one(model: &DepthModel, features: &FeaturePyramid, img: &Tensor, opts: &BenchOptions) -> Result<DecoderBench> {
    let dec = &model.decoder;
    let decoder_forward = || -> Result<DepthPyramid> {
        let p = dec.forward(features, Mode::Eval)?;
        assert_no_grad(&p);
        Ok(p)
    };
    let e2e_forward = |x: &Tensor| -> Result<DepthPyramid> {
        let p = model.forward(x, Mode::Eval)?;
        assert_no_grad(&p);
        Ok(p)
    };

    let decoder_latency = time_forward(decoder_forward, opts.warmup, opts.iters)?;
    let end_to_end_latency = time_forward(|| e2e_forward(img), opts.warmup, opts.iters)?;
    let decoder_peak_elements = peak_activations(decoder_forward)?;
    let end_to_end_peak_elements = peak_activations(|| e2e_forward(img))?;

    let elem_bytes = std::mem::size_of::<Real>() as u64;
    let mut sweep = Vec::new();
    for &bs in &opts.batch_sizes {
        let projected_bytes = end_to_end_peak_elements as u64 * bs as u64 * elem_bytes;
        let images_per_sec = if projected_bytes > opts.max_activation_bytes {
            None
        } else {
            let batch = Tensor::stack_batch(&vec![img.clone(); bs])?;
            let stats = time_forward(|| e2e_forward(&batch), 1, MIN_ITERS)?;
            Some(bs as Real * 1e3 / stats.median_ms)
        };
        sweep.push(Throughput { batch_size: bs, images_per_sec, projected_bytes });
    }

    Ok(DecoderBench {
        kind: dec.kind().to_string(),
        decoder_params: dec.param_count(),
        total_params: model.param_count(),
        fps_bs1: 1e3 / end_to_end_latency.median_ms,
        decoder_latency,
        end_to_end_latency,
        decoder_peak_elements,
        end_to_end_peak_elements,
        sweep,
    })
}

/// Benchmarks `config`'s DRNet decoder against the full-resolution decoder at
/// each square resolution, batch 1, on identical inputs and backbone weights.
pub fn compare_decoders(config: &RunConfig, resolutions: &[usize], opts: &BenchOptions) -> Result<BenchReport> {
    let drnet_cfg = DecoderConfig { kind: "drnet".into(), ..config.decoder.clone() };
    let fullres_cfg = DecoderConfig { kind: "fullres".into(), ..config.decoder.clone() };
    let drnet = DepthModel::new(&config.backbone, &drnet_cfg, opts.seed)?;
    let fullres = DepthModel::new(&config.backbone, &fullres_cfg, opts.seed)?;

    let mut results = Vec::with_capacity(resolutions.len());
    for &res in resolutions {
        let img = synth_scene(opts.seed, res, res)?.rgb;
        let features = no_grad(|| drnet.features(&img, Mode::Eval, false))?;
        let other = no_grad(|| fullres.features(&img, Mode::Eval, false))?;
        for i in 1..=5 {
            assert_eq!(features.level(i).data(), other.level(i).data(), "backbones diverge at down_{i}");
        }
        drop(other);

        let d = bench_one(&drnet, &features, &img, opts)?;
        let f = bench_one(&fullres, &features, &img, opts)?;
        let ratios = Ratios {
            speedup: f.decoder_latency.median_ms / d.decoder_latency.median_ms,
            memory: f.decoder_peak_elements as Real / d.decoder_peak_elements as Real,
            end_to_end_speedup: f.end_to_end_latency.median_ms / d.end_to_end_latency.median_ms,
            end_to_end_memory: f.end_to_end_peak_elements as Real / d.end_to_end_peak_elements as Real,
        };
        results.push(ResolutionBench { resolution: res, drnet: d, fullres: f, ratios });
    }
    Ok(BenchReport { config: config.clone(), options: opts.clone(), results })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_over_exact_sample_count() {
        let mut calls = 0;
        let s = time_forward(
            || {
                calls += 1;
                Ok(())
            },
            4,
            12,
        )
        .unwrap();
        assert_eq!(calls, 16);
        assert_eq!(s.samples, 12);
        assert!(s.p10_ms <= s.median_ms && s.median_ms <= s.p90_ms);
        assert!(time_forward(|| Ok(()), 0, 9).is_err());
    }

    #[test]
    fn percentiles() {
        let s = LatencyStats::from_samples((1..=11).rev().map(|v| v as Real).collect());
        assert_eq!((s.p10_ms, s.median_ms, s.p90_ms), (2.0, 6.0, 10.0));
    }
}
