use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Source of values for graph leaves.
pub trait Bindings {
    fn lookup(&self, name: &str) -> Option<&Tensor>;
}

impl Bindings for BTreeMap<String, Tensor> {
    fn lookup(&self, name: &str) -> Option<&Tensor> {
        self.get(name)
    }
}

/// Two binding sources consulted in order.
pub struct Overlay<'a> {
    pub first: &'a dyn Bindings,
    pub second: &'a dyn Bindings,
}

impl Bindings for Overlay<'_> {
    fn lookup(&self, name: &str) -> Option<&Tensor> {
        self.first.lookup(name).or_else(|| self.second.lookup(name))
    }
}

/// Named learnable tensors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Moves every tensor of `other` into `self`.
    pub fn extend(&mut self, other: ParamStore) {
        self.tensors.extend(other.tensors);
    }

    /// Splits off the tensors whose names start with `prefix`.
    pub fn split_prefix(&mut self, prefix: &str) -> ParamStore {
        let names: alloc::vec::Vec<String> =
            self.tensors.keys().filter(|k| k.starts_with(prefix)).cloned().collect();
        let mut out = ParamStore::new();
        for n in names {
            let t = self.tensors.remove(&n).expect("present");
            out.tensors.insert(n, t);
        }
        out
    }
}

impl Bindings for ParamStore {
    fn lookup(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }
}

impl FromIterator<(String, Tensor)> for ParamStore {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        ParamStore { tensors: iter.into_iter().collect() }
    }
}

/// Gradient tensors keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    tensors: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    /// Zero gradients for every parameter in `params`.
    pub fn zeros_like(params: &ParamStore) -> Self {
        Gradients {
            tensors: params.iter().map(|(k, v)| (k.clone(), Tensor::zeros(v.shape()))).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Accumulator for `name`, created as zeros of `shape` on first use.
    pub fn entry(&mut self, name: &str, shape: &[usize]) -> Result<&mut Tensor> {
        if !self.tensors.contains_key(name) {
            self.tensors.insert(name.to_string(), Tensor::zeros(shape));
        }
        let t = self.tensors.get_mut(name).expect("inserted");
        if t.shape() != shape {
            return Err(Error::KeyMismatch(format!(
                "gradient `{name}` has shape {:?}, parameter has {shape:?}",
                t.shape()
            )));
        }
        Ok(t)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn zero(&mut self) {
        for t in self.tensors.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        math::sqrt(self.tensors.values().map(Tensor::norm_sq).sum())
    }

    /// Rescales all gradients so their joint L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    pub fn into_map(self) -> BTreeMap<String, Tensor> {
        self.tensors
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_bounds_global_norm() {
        let mut g = Gradients::new();
        g.insert("a", Tensor::row(&[3.0, 0.0]));
        g.insert("b", Tensor::row(&[0.0, 4.0]));
        assert_eq!(g.clip_global_norm(5.0), 5.0);
        assert_eq!(g.get("a").unwrap().data(), &[3.0, 0.0]);
        assert_eq!(g.clip_global_norm(1.0), 5.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_prefix_moves_matching_names() {
        let mut p = ParamStore::new();
        p.insert("gen.a", Tensor::scalar(1.0));
        p.insert("clas.b", Tensor::scalar(2.0));
        let gen = p.split_prefix("gen.");
        assert_eq!(gen.len(), 1);
        assert!(p.contains("clas.b") && !p.contains("gen.a"));
    }
}
