//! Synthetic RGB-D scenes and their on-disk form.

pub mod dataset;
pub mod netpbm;
pub mod synth;

pub use dataset::{generate_dataset, Dataset, DatasetInfo, ManifestEntry, Sample};
pub use synth::{synth_scene, synth_scene_with, Scene, SceneParams};
