use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::graph::{Gradients, Graph};
use crate::autodiff::tensor::Tensor;
use crate::blob;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl RmsPropConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            decay: 0.99,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam(AdamConfig),
    RmsProp(RmsPropConfig),
}

#[derive(Clone, Debug, PartialEq)]
struct Slot {
    value: Tensor,
    grad: Option<Tensor>,
    /// Adam first moment; unused by RMSprop.
    m: Tensor,
    /// Adam second moment or RMSprop mean-square accumulator.
    v: Tensor,
}

/// Named parameters with their optimizer state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    slots: BTreeMap<String, Slot>,
    step: u64,
    optimizer: Option<Optimizer>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    step: u64,
    optimizer: Option<Optimizer>,
    params: Vec<Entry>,
    layout: String,
    blob: String,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let zeros = Tensor::zeros(value.shape());
        self.slots.insert(
            name.to_string(),
            Slot {
                value,
                grad: None,
                m: zeros.clone(),
                v: zeros,
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slots.get(name).map(|s| &s.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.slots.get_mut(name).map(|s| &mut s.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.slots.get(name).and_then(|s| s.grad.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn optimizer(&self) -> Option<Optimizer> {
        self.optimizer
    }

    pub fn num_values(&self) -> usize {
        self.slots.values().map(|s| s.value.len()).sum()
    }

    pub fn set_grad(&mut self, name: &str, grad: Tensor) -> Result<()> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        if grad.shape() != slot.value.shape() {
            return Err(Error::Shape(format!(
                "gradient for `{name}` has shape {:?}, parameter has {:?}",
                grad.shape(),
                slot.value.shape()
            )));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite(format!("gradient of `{name}`")));
        }
        slot.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for s in self.slots.values_mut() {
            s.grad = None;
        }
    }

    /// Copies the adjoints of every trainable parameter node of `graph` that
    /// belongs to this store. Parameters the graph never reached get a zero
    /// gradient so that an optimizer step leaves their value unchanged.
    pub fn load_grads(&mut self, graph: &Graph, grads: &Gradients) -> Result<()> {
        let mut seen = Vec::new();
        for (name, var) in graph.param_vars() {
            if !self.slots.contains_key(name) {
                continue;
            }
            let g = match grads.get(var) {
                Some(g) => g.clone(),
                None => Tensor::zeros(graph.value(var).shape()),
            };
            self.set_grad(name, g)?;
            seen.push(name.to_string());
        }
        if seen.is_empty() {
            return Err(Error::MissingGradient("no parameter of this store is in the graph".into()));
        }
        Ok(())
    }

    fn check_grads(&self) -> Result<()> {
        match self.slots.iter().find(|(_, s)| s.grad.is_none()) {
            Some((name, _)) => Err(Error::MissingGradient(name.clone())),
            None => Ok(()),
        }
    }

    /// Bias-corrected Adam update of every parameter; consumes the gradients.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        self.check_grads()?;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for s in self.slots.values_mut() {
            let g = s.grad.take().expect("checked");
            let (vals, m, v) = (s.value.data_mut(), s.m.data_mut(), s.v.data_mut());
            for i in 0..vals.len() {
                let gi = g.data()[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                vals[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            }
        }
        self.optimizer = Some(Optimizer::Adam(*cfg));
        self.assert_finite()
    }

    /// RMSprop update of every parameter; consumes the gradients.
    pub fn rmsprop_step(&mut self, cfg: &RmsPropConfig) -> Result<()> {
        self.check_grads()?;
        self.step += 1;
        for s in self.slots.values_mut() {
            let g = s.grad.take().expect("checked");
            let (vals, v) = (s.value.data_mut(), s.v.data_mut());
            for i in 0..vals.len() {
                let gi = g.data()[i];
                v[i] = cfg.decay * v[i] + (1.0 - cfg.decay) * gi * gi;
                vals[i] -= cfg.lr * gi / (v[i].sqrt() + cfg.eps);
            }
        }
        self.optimizer = Some(Optimizer::RmsProp(*cfg));
        self.assert_finite()
    }

    fn assert_finite(&self) -> Result<()> {
        for (name, s) in &self.slots {
            if !s.value.is_finite() {
                return Err(Error::NonFinite(format!("parameter `{name}` after optimizer step")));
            }
        }
        Ok(())
    }

    /// Writes a JSON manifest and a sibling blob holding, per parameter in name
    /// order, the values followed by the two optimizer moment buffers.
    pub fn save(&self, manifest: &Path) -> Result<()> {
        let mut data = Vec::with_capacity(3 * self.num_values());
        let mut params = Vec::with_capacity(self.slots.len());
        for (name, s) in &self.slots {
            params.push(Entry {
                name: name.clone(),
                shape: s.value.shape().to_vec(),
            });
            data.extend_from_slice(s.value.data());
            data.extend_from_slice(s.m.data());
            data.extend_from_slice(s.v.data());
        }
        let m = Manifest {
            format: "param-store".into(),
            version: 1,
            step: self.step,
            optimizer: self.optimizer,
            params,
            layout: "per parameter: value, first moment, second moment".into(),
            blob: blob::blob_file_name(manifest),
        };
        blob::write_json(manifest, &m)?;
        blob::write_f64s(&blob::blob_path(manifest), &data)
    }

    pub fn load(manifest: &Path) -> Result<Self> {
        let m: Manifest = blob::read_json(manifest)?;
        if m.format != "param-store" {
            return Err(Error::Format(format!("{}: not a param-store manifest", manifest.display())));
        }
        let total: usize = m.params.iter().map(|e| 3 * e.shape.iter().product::<usize>()).sum();
        let data = blob::read_f64s(&blob::resolve_sibling(manifest, &m.blob), total)?;
        let mut store = ParamStore {
            step: m.step,
            optimizer: m.optimizer,
            ..Default::default()
        };
        let mut off = 0;
        for e in m.params {
            let n: usize = e.shape.iter().product();
            let mut take = || {
                let t = Tensor::new(e.shape.clone(), data[off..off + n].to_vec());
                off += n;
                t
            };
            let slot = Slot {
                value: take()?,
                grad: None,
                m: take()?,
                v: take()?,
            };
            store.slots.insert(e.name, slot);
        }
        Ok(store)
    }
}
