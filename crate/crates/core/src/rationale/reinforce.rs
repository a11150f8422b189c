use alloc::vec::Vec;

use super::config::JointConfig;
use super::generator::ZSource;
use super::loss::{rationale_graphs, RationaleLossTerms};
use crate::autodiff::{Gradients, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;
use crate::text::Label;

/// Result of one policy-gradient estimate over a batch.
#[derive(Debug, Clone)]
pub struct GradientEstimate {
    /// Generator entries hold `mean (L − b) ∇ ln p(z|x)`, classifier entries
    /// `mean ∇ ‖clas(z, x) − y'‖²`.
    pub grads: Gradients,
    /// Mean loss terms over all sampled rationales.
    pub terms: RationaleLossTerms,
    pub baseline: f64,
    pub selected: usize,
    pub words: usize,
}

/// Samples `cfg.samples` rationales per comment and forms the REINFORCE
/// estimate against `baseline` (the batch mean loss when `None`). Sample `s`
/// of comment `i` draws from its own stream derived from `(stream, i, s)`.
pub fn estimate_generator_gradient(
    params: &ParamStore,
    cfg: &JointConfig,
    batch: &[(&Tensor, Label)],
    baseline: Option<f64>,
    stream: u64,
) -> Result<GradientEstimate> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let samples = cfg.samples.max(1);
    let mut built = Vec::with_capacity(batch.len());
    let mut all_terms = Vec::with_capacity(batch.len() * samples);
    let (mut selected, mut words) = (0, 0);
    for (i, &(x, label)) in batch.iter().enumerate() {
        let mut rngs: Vec<rng::Rng> = (0..samples).map(|s| rng::derived(stream, i as u64, s as u64)).collect();
        let sources = rngs.iter_mut().map(ZSource::Sample).collect();
        let mut tape = Tape::new(params);
        let graphs = rationale_graphs(&mut tape, cfg, x, label, sources)?;
        for g in &graphs {
            if !g.terms.total.is_finite() {
                return Err(Error::NonFinite { node: g.classification.index(), op: "rationale_loss" });
            }
            all_terms.push(g.terms);
            selected += super::loss::selected_count(&g.selection.z);
            words += g.selection.z.len();
        }
        built.push((tape, graphs));
    }
    let terms = RationaleLossTerms::mean(&all_terms);
    let baseline = baseline.unwrap_or(terms.total);

    let mut grads = Gradients::zeros_like(params);
    let seed = 1.0 / (batch.len() * samples) as f64;
    for (mut tape, graphs) in built {
        let mut surrogate = None;
        for g in &graphs {
            let advantage = g.terms.total - baseline;
            let score = tape.scale(g.selection.log_prob, advantage)?;
            let part = tape.add(g.classification, score)?;
            surrogate = Some(match surrogate {
                None => part,
                Some(acc) => tape.add(acc, part)?,
            });
        }
        tape.backward_into(surrogate.expect("at least one sample"), &mut grads, seed)?;
    }
    Ok(GradientEstimate { grads, terms, baseline, selected, words })
}
