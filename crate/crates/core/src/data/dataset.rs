//! On-disk datasets: `manifest.json` (array of `{"rgb", "depth"}` paths
//! relative to the dataset directory), `dataset.json` (generation info) and
//! the PPM/PGM files themselves.

use std::path::{Path, PathBuf};

use drnet_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::data::netpbm::{load_pgm16, load_ppm, save_pgm16, save_ppm};
use crate::data::synth::{synth_scene, Scene};
use crate::error::{DrnetError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub rgb: String,
    pub depth: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub split: String,
    pub seed: u64,
    pub count: usize,
    pub size: [usize; 2],
}

/// One RGB-D pair, both with batch dimension 1.
#[derive(Clone, Debug)]
pub struct Sample {
    pub rgb: Tensor,
    pub depth: Tensor,
}

impl From<Scene> for Sample {
    fn from(s: Scene) -> Self {
        Sample { rgb: s.rgb, depth: s.depth }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Scenes `seed..seed + count` generated in memory.
    pub fn synthetic(seed: u64, count: usize, h: usize, w: usize) -> Result<Self> {
        let samples = (0..count as u64).map(|i| synth_scene(seed + i, h, w).map(Sample::from)).collect::<Result<_>>()?;
        Ok(Dataset { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Loads every manifest entry. All samples must share one size.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path)
            .map_err(|e| DrnetError::Dataset(format!("{}: {e}", manifest_path.display())))?;
        let entries: Vec<ManifestEntry> = serde_json::from_str(&text)
            .map_err(|e| DrnetError::Dataset(format!("{}: {e}", manifest_path.display())))?;
        let mut samples = Vec::with_capacity(entries.len());
        for entry in &entries {
            let rgb_path = dir.join(&entry.rgb);
            let depth_path = dir.join(&entry.depth);
            let rgb = load_ppm(&rgb_path).map_err(|source| DrnetError::Image { path: rgb_path.clone(), source })?;
            let depth = load_pgm16(&depth_path).map_err(|source| DrnetError::Image { path: depth_path.clone(), source })?;
            let (rs, ds) = (rgb.shape(), depth.shape());
            if (rs.h, rs.w) != (ds.h, ds.w) {
                return Err(DrnetError::Dataset(format!(
                    "{}: rgb is {}x{} but depth is {}x{}",
                    entry.rgb, rs.h, rs.w, ds.h, ds.w
                )));
            }
            if let Some(first) = samples.first().map(|s: &Sample| s.rgb.shape()) {
                if (first.h, first.w) != (rs.h, rs.w) {
                    return Err(DrnetError::Dataset(format!("{}: size differs from the first sample", entry.rgb)));
                }
            }
            samples.push(Sample { rgb, depth });
        }
        Ok(Dataset { samples })
    }

    /// Stacks the selected samples into one batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        let rgb: Vec<Tensor> = indices.iter().map(|&i| self.samples[i].rgb.clone()).collect();
        let depth: Vec<Tensor> = indices.iter().map(|&i| self.samples[i].depth.clone()).collect();
        Ok((Tensor::stack_batch(&rgb)?, Tensor::stack_batch(&depth)?))
    }
}

pub fn file_names(index: usize) -> ManifestEntry {
    ManifestEntry { rgb: format!("rgb_{index:05}.ppm"), depth: format!("depth_{index:05}.pgm") }
}

/// Writes scenes `seed..seed + count` plus `manifest.json` and `dataset.json`
/// into `dir`, generating on up to `threads` threads. Output is identical for
/// any thread count.
pub fn generate_dataset(
    dir: impl AsRef<Path>,
    count: usize,
    (h, w): (usize, usize),
    seed: u64,
    split: &str,
    threads: usize,
) -> Result<Vec<ManifestEntry>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let threads = threads.clamp(1, count.max(1));
    let write_one = |i: usize| -> Result<ManifestEntry> {
        let scene = synth_scene(seed + i as u64, h, w)?;
        let names = file_names(i);
        let rgb_path: PathBuf = dir.join(&names.rgb);
        let depth_path: PathBuf = dir.join(&names.depth);
        save_ppm(&rgb_path, &scene.rgb).map_err(|source| DrnetError::Image { path: rgb_path, source })?;
        save_pgm16(&depth_path, &scene.depth).map_err(|source| DrnetError::Image { path: depth_path, source })?;
        Ok(names)
    };

    let results: Vec<Result<ManifestEntry>> = if threads == 1 {
        (0..count).map(write_one).collect()
    } else {
        let mut slots: Vec<Option<Result<ManifestEntry>>> = (0..count).map(|_| None).collect();
        let chunk = count.div_ceil(threads);
        std::thread::scope(|s| {
            for (t, part) in slots.chunks_mut(chunk).enumerate() {
                let write_one = &write_one;
                s.spawn(move || {
                    for (j, slot) in part.iter_mut().enumerate() {
                        *slot = Some(write_one(t * chunk + j));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.expect("every slot filled")).collect()
    };
    let entries = results.into_iter().collect::<Result<Vec<_>>>()?;

    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&entries)?)?;
    let info = DatasetInfo { split: split.to_string(), seed, count, size: [h, w] };
    std::fs::write(dir.join("dataset.json"), serde_json::to_string_pretty(&info)?)?;
    Ok(entries)
}
