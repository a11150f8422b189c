use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment accumulators for every parameter plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState { config, step: 0, first: BTreeMap::new(), second: BTreeMap::new() }
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.first.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor> {
        self.second.get(name)
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// Entries whose gradient is exactly zero keep their value; their moments
/// still decay. Untouched embedding buckets and parameters the loss does not
/// reach therefore stay where they are.
pub fn adam_step(params: &mut ParamStore, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.names().zip(grads.names()).any(|(a, b)| a != b) {
        return Err(Error::KeyMismatch(format!(
            "parameters {:?} vs gradients {:?}",
            params.names().collect::<alloc::vec::Vec<_>>(),
            grads.names().collect::<alloc::vec::Vec<_>>()
        )));
    }
    for (name, p) in params.iter() {
        let g = grads.get(name).expect("keys checked");
        if g.shape() != p.shape() {
            return Err(Error::KeyMismatch(format!(
                "`{name}`: parameter {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }

    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - math::powi(beta1, t);
    let bc2 = 1.0 - math::powi(beta2, t);

    for (name, p) in params.iter_mut() {
        let g = grads.get(name).expect("keys checked").data();
        let m = state.first.entry(name.clone()).or_insert_with(|| Tensor::zeros(p.shape()));
        let v = state.second.entry(name.clone()).or_insert_with(|| Tensor::zeros(p.shape()));
        for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.data_mut()).zip(v.data_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            if g != 0.0 {
                *w -= lr * (*m / bc1) / (math::sqrt(*v / bc2) + eps);
            }
        }
    }
    Ok(())
}
