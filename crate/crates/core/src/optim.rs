//! Adam with the amsgrad modification and L2 weight decay folded into the
//! gradient.
//!
//! Per parameter and step t:
//!
//! ```text
//! g    = grad + weight_decay * p
//! m    = b1 * m + (1 - b1) * g
//! v    = b2 * v + (1 - b2) * g^2
//! vmax = max(vmax, v)
//! p   -= lr * (m / (1 - b1^t)) / (sqrt(vmax / (1 - b2^t)) + eps)
//! ```
//!
//! Moments are kept on the same f32 storage grid as the parameters, so a
//! checkpoint restores the optimizer exactly.

use std::collections::{BTreeMap, HashMap};

use drnet_tensor::container::Entry;
use drnet_tensor::{to_storage, Parameter, Real};

use crate::config::TrainConfig;
use crate::error::{DrnetError, Result};
use crate::layers::Module;

#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Vec<Real>,
    pub v: Vec<Real>,
    pub vmax: Vec<Real>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Moments { m: vec![0.0; n], v: vec![0.0; n], vmax: vec![0.0; n] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamAmsgrad {
    pub lr: Real,
    pub weight_decay: Real,
    pub betas: [Real; 2],
    pub eps: Real,
    step: u64,
    state: BTreeMap<String, Moments>,
}

impl AdamAmsgrad {
    pub fn new(config: &TrainConfig) -> Self {
        AdamAmsgrad {
            lr: config.lr,
            weight_decay: config.weight_decay,
            betas: config.betas,
            eps: config.eps,
            step: 0,
            state: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, name: &str) -> Option<&Moments> {
        self.state.get(name)
    }

    /// Updates every parameter accepted by `trainable`. All gradients are
    /// checked before anything is modified.
    pub fn step(&mut self, module: &mut dyn Module, trainable: &dyn Fn(&str) -> bool) -> Result<()> {
        let mut grads: HashMap<String, Vec<Real>> = HashMap::new();
        let mut missing = None;
        module.visit_params(&mut |p| {
            if missing.is_some() || !trainable(p.name()) {
                return;
            }
            match p.grad() {
                Some(g) => {
                    grads.insert(p.name().to_string(), g);
                }
                None => missing = Some(p.name().to_string()),
            }
        });
        if let Some(name) = missing {
            return Err(DrnetError::MissingGradient(name));
        }

        self.step += 1;
        let t = self.step as i32;
        let [b1, b2] = self.betas;
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let (lr, wd, eps) = (self.lr, self.weight_decay, self.eps);
        let state = &mut self.state;
        let mut result: Result<()> = Ok(());
        module.visit_params_mut(&mut |p: &mut Parameter| {
            let Some(grad) = grads.get(p.name()) else { return };
            let st = state.entry(p.name().to_string()).or_insert_with(|| Moments::zeros(p.numel()));
            let mut values = p.values().to_vec();
            for i in 0..values.len() {
                let g = grad[i] + wd * values[i];
                st.m[i] = to_storage(b1 * st.m[i] + (1.0 - b1) * g);
                st.v[i] = to_storage(b2 * st.v[i] + (1.0 - b2) * g * g);
                st.vmax[i] = st.vmax[i].max(st.v[i]);
                let m_hat = st.m[i] / bc1;
                let v_hat = st.vmax[i] / bc2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            if let Err(e) = p.set_values(values) {
                result = Err(e.into());
            }
        });
        result
    }

    /// `optim.step` plus `optim.{m,v,vmax}.{name}` for every tracked parameter.
    pub fn to_entries(&self) -> Vec<Entry> {
        let mut out = vec![Entry { name: "optim.step".into(), dims: vec![1], values: vec![self.step as f32] }];
        for (name, st) in &self.state {
            for (kind, vals) in [("m", &st.m), ("v", &st.v), ("vmax", &st.vmax)] {
                out.push(Entry {
                    name: format!("optim.{kind}.{name}"),
                    dims: vec![vals.len() as u32],
                    values: vals.iter().map(|&x| x as f32).collect(),
                });
            }
        }
        out
    }

    /// Restores state written by [`AdamAmsgrad::to_entries`]; hyperparameters
    /// keep their current values.
    pub fn load_entries(&mut self, entries: &HashMap<String, Entry>) -> Result<()> {
        let step = entries.get("optim.step").ok_or_else(|| DrnetError::MissingEntry("optim.step".into()))?;
        self.step = step.values.first().copied().unwrap_or(0.0) as u64;
        let mut state = BTreeMap::new();
        for name in entries.keys().filter_map(|k| k.strip_prefix("optim.m.")) {
            let get = |kind: &str| -> Result<Vec<Real>> {
                let key = format!("optim.{kind}.{name}");
                let e = entries.get(&key).ok_or(DrnetError::MissingEntry(key))?;
                Ok(e.values.iter().map(|&x| x as Real).collect())
            };
            state.insert(name.to_string(), Moments { m: get("m")?, v: get("v")?, vmax: get("vmax")? });
        }
        self.state = state;
        Ok(())
    }
}
