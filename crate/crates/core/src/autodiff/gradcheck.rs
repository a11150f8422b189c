use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index;

use super::graph::{ComputeGraph, NodeId};
use super::params::ParamStore;
use super::tape::Tape;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Entries checked per parameter; `None` checks all of them.
    pub max_entries_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, max_entries_per_param: Some(32), seed: 0 }
    }
}

/// Denominator floor for the relative error. Central differences at a step
/// near 1e-5 carry roundoff around `eps * |loss| / step`, roughly 1e-11, so
/// entries whose true gradient is far below this floor are compared on an
/// absolute scale instead of amplifying that noise.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Largest relative error `|analytic − numeric| / max(|numeric|, RELATIVE_FLOOR)`
/// between reverse-mode gradients and central differences over sampled
/// entries of every learnable leaf of `graph`.
pub fn finite_diff_check(graph: &ComputeGraph, loss: NodeId, bindings: &ParamStore, step: f64) -> Result<f64> {
    finite_diff_check_with(graph, loss, bindings, GradCheckConfig { step, ..GradCheckConfig::default() })
}

pub fn finite_diff_check_with(
    graph: &ComputeGraph,
    loss: NodeId,
    bindings: &ParamStore,
    cfg: GradCheckConfig,
) -> Result<f64> {
    if !(cfg.step > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be > 0, got {}", cfg.step)));
    }
    let analytic = Tape::replay(graph, bindings)?.backward(loss)?;
    let mut work = bindings.clone();
    let mut rng = seeded(cfg.seed);
    let names: Vec<String> = graph.param_names().map(ToString::to_string).collect();

    let mut worst: f64 = 0.0;
    for name in &names {
        let n = work.get(name).ok_or_else(|| Error::Unbound(name.clone()))?.len();
        let entries: Vec<usize> = match cfg.max_entries_per_param {
            Some(k) if k < n => {
                let mut e = index::sample(&mut rng, n, k).into_vec();
                e.sort_unstable();
                e
            }
            _ => (0..n).collect(),
        };
        for i in entries {
            let original = work.get(name).expect("present").data()[i];
            let plus = perturbed_loss(graph, loss, &mut work, name, i, original + cfg.step)?;
            let minus = perturbed_loss(graph, loss, &mut work, name, i, original - cfg.step)?;
            work.get_mut(name).expect("present").data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic.get(name).expect("gradient for every param").data()[i];
            let rel = (a - numeric).abs() / numeric.abs().max(RELATIVE_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn perturbed_loss(
    graph: &ComputeGraph,
    loss: NodeId,
    work: &mut ParamStore,
    name: &str,
    index: usize,
    value: f64,
) -> Result<f64> {
    work.get_mut(name).expect("present").data_mut()[index] = value;
    let tape = Tape::replay(graph, work)?;
    let l = tape.value(loss).item();
    if !l.is_finite() {
        return Err(Error::NonFinite { node: loss.index(), op: "perturbed loss" });
    }
    Ok(l)
}
