//! Checkpoints: a DRT1 container holding parameters, batchnorm running
//! statistics and optimizer state, plus a `<path>.json` sidecar with the
//! run configuration.

use std::path::{Path, PathBuf};

use drnet_tensor::container::{self, Entry};
use drnet_tensor::Real;

use crate::config::RunConfig;
use crate::error::{DrnetError, Result};
use crate::layers::Module;
use crate::model::DepthModel;
use crate::optim::AdamAmsgrad;

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn model_entries(model: &DepthModel) -> Vec<Entry> {
    let mut entries = Vec::new();
    model.visit_params(&mut |p| entries.push(p.to_entry()));
    model.visit_stats(&mut |prefix, stats| {
        for (kind, vals) in [("running_mean", stats.mean()), ("running_var", stats.var())] {
            entries.push(Entry {
                name: format!("{prefix}.{kind}"),
                dims: vec![vals.len() as u32],
                values: vals.iter().map(|&v| v as f32).collect(),
            });
        }
    });
    entries
}

pub fn save(path: impl AsRef<Path>, model: &DepthModel, optim: &AdamAmsgrad, config: &RunConfig) -> Result<()> {
    let path = path.as_ref();
    let mut entries = model_entries(model);
    entries.extend(optim.to_entries());
    container::save(path, &entries)?;
    std::fs::write(sidecar_path(path), config.to_json())?;
    Ok(())
}

fn check_section<T: serde::Serialize + PartialEq>(section: &'static str, expected: &T, found: &T) -> Result<()> {
    if expected != found {
        return Err(DrnetError::ConfigMismatch {
            section,
            expected: serde_json::to_string(expected)?,
            found: serde_json::to_string(found)?,
        });
    }
    Ok(())
}

pub struct Loaded {
    pub model: DepthModel,
    pub optim: AdamAmsgrad,
    pub config: RunConfig,
}

/// Restores a checkpoint. With `expected`, the stored backbone and decoder
/// sections must match it.
pub fn load(path: impl AsRef<Path>, expected: Option<&RunConfig>) -> Result<Loaded> {
    let path = path.as_ref();
    let sidecar = sidecar_path(path);
    let config = RunConfig::load(&sidecar)?;
    if let Some(exp) = expected {
        check_section("backbone", &exp.backbone, &config.backbone)?;
        check_section("decoder", &exp.decoder, &config.decoder)?;
    }
    let entries = container::index(container::load(path)?)?;

    let mut model = DepthModel::new(&config.backbone, &config.decoder, config.train.seed)?;
    let mut result: Result<()> = Ok(());
    model.visit_params_mut(&mut |p| {
        if result.is_err() {
            return;
        }
        result = match entries.get(p.name()) {
            Some(e) => p.load_entry(e).map_err(DrnetError::from),
            None => Err(DrnetError::MissingEntry(p.name().to_string())),
        };
    });
    result?;
    let mut result: Result<()> = Ok(());
    model.visit_stats(&mut |prefix, stats| {
        if result.is_err() {
            return;
        }
        let get = |kind: &str| -> Result<Vec<Real>> {
            let key = format!("{prefix}.{kind}");
            let e = entries.get(&key).ok_or(DrnetError::MissingEntry(key))?;
            Ok(e.values.iter().map(|&v| v as Real).collect())
        };
        result = (|| Ok(stats.set(get("running_mean")?, get("running_var")?)?))();
    });
    result?;

    let mut optim = AdamAmsgrad::new(&config.train);
    optim.load_entries(&entries)?;
    Ok(Loaded { model, optim, config })
}
