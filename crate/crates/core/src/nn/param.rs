use std::collections::HashMap;

use super::tape::Gradients;
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f32 = 0.9;
pub const ADAM_BETA2: f32 = 0.999;
pub const ADAM_EPS: f32 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor with its Adam moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub adam_m: Vec<f32>,
    pub adam_v: Vec<f32>,
    pub step: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let n = value.len();
        Parameter {
            name: name.into(),
            value,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn shape(&self) -> Shape {
        self.value.shape()
    }

    /// One bias-corrected Adam step against the stored gradient, which is
    /// consumed.
    pub fn adam_update(&mut self, lr: f32) -> Result<()> {
        let grad = self
            .value
            .take_grad()
            .ok_or_else(|| Error::usage(format!("adam update of `{}` without a gradient", self.name)))?;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        let values = self.value.data_mut();
        for (((w, g), m), v) in values.iter_mut().zip(&grad).zip(&mut self.adam_m).zip(&mut self.adam_v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        self.value.ensure_finite(&self.name)
    }
}

/// Named, ordered collection of parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, param: Parameter) -> Result<ParamId> {
        if self.by_name.contains_key(&param.name) {
            return Err(Error::config(format!("duplicate parameter `{}`", param.name)));
        }
        let n = param.value.len();
        if param.adam_m.len() != n || param.adam_v.len() != n {
            return Err(Error::config(format!(
                "optimizer state of `{}` does not match its value",
                param.name
            )));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(param.name.clone(), id);
        self.params.push(param);
        Ok(id)
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        self.insert(Parameter::new(name, value))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Adds `scale·∂loss/∂p` from a reverse sweep into every parameter's buffer.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f32) -> Result<()> {
        for (id, g) in grads.params() {
            let scaled: Vec<f32> = g.iter().map(|v| v * scale).collect();
            self.params[id.0].value.accumulate_grad(&scaled)?;
        }
        Ok(())
    }

    /// Ensures every listed parameter carries a gradient buffer (zeros if absent).
    pub fn touch_grads(&mut self, ids: &[ParamId]) {
        for id in ids {
            let p = &mut self.params[id.0];
            if p.value.grad().is_none() {
                let n = p.value.len();
                p.value.set_grad(Some(vec![0.0; n])).expect("matching length");
            }
        }
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.value.take_grad();
        }
    }

    pub fn adam_step(&mut self, ids: &[ParamId], lr: f32) -> Result<()> {
        self.touch_grads(ids);
        for id in ids {
            self.params[id.0].adam_update(lr)?;
        }
        Ok(())
    }

    /// Zeroes Adam moments and step counters.
    pub fn reset_optimizer(&mut self) {
        for p in &mut self.params {
            p.adam_m.fill(0.0);
            p.adam_v.fill(0.0);
            p.step = 0;
        }
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}
