use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::JointConfig;
use super::generator::{generator_states, select, Selection, ZSource, CLAS_ENCODER, CLAS_HEAD};
use crate::autodiff::{NodeId, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::models::{classify_comment, classify_pooled, encode, ClassifierNodes, Pooling};
use crate::tensor::Tensor;
use crate::text::Label;

/// The rationale objective split into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RationaleLossTerms {
    /// `‖clas(z, x) − y'‖²`.
    pub classification: f64,
    /// `λ1 · |z|`.
    pub sparsity: f64,
    /// `λ2 · Σ_t |z_t − z_{t+1}|`.
    pub coherence: f64,
    pub total: f64,
}

impl RationaleLossTerms {
    pub fn new(classification: f64, z: &[bool], lambda_sparsity: f64, lambda_coherence: f64) -> Self {
        let sparsity = lambda_sparsity * selected_count(z) as f64;
        let coherence = lambda_coherence * transitions(z) as f64;
        RationaleLossTerms { classification, sparsity, coherence, total: classification + sparsity + coherence }
    }

    /// Element-wise mean of several term sets.
    pub fn mean(terms: &[RationaleLossTerms]) -> Self {
        let n = terms.len().max(1) as f64;
        let sum = |f: fn(&RationaleLossTerms) -> f64| terms.iter().map(f).sum::<f64>() / n;
        RationaleLossTerms {
            classification: sum(|t| t.classification),
            sparsity: sum(|t| t.sparsity),
            coherence: sum(|t| t.coherence),
            total: sum(|t| t.total),
        }
    }
}

pub fn selected_count(z: &[bool]) -> usize {
    z.iter().filter(|&&b| b).count()
}

/// Number of neighbouring pairs that differ.
pub fn transitions(z: &[bool]) -> usize {
    z.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Rows of `x` whose flag is set, in order; `None` when nothing is selected.
pub fn selected_rows(x: &Tensor, z: &[bool]) -> Option<Tensor> {
    let d = x.cols();
    let data: Vec<f64> = (0..x.rows()).filter(|&t| z[t]).flat_map(|t| x.row_slice(t).iter().copied()).collect();
    if data.is_empty() {
        return None;
    }
    Some(Tensor::new(vec![data.len() / d, d], data).expect("consistent rows"))
}

/// The rationale classifier applied to the selected words only. Unselected
/// words are removed; with no selection the head sees a zero summary.
pub fn classify_selection(tape: &mut Tape, cfg: &JointConfig, x: &Tensor, z: &[bool]) -> Result<ClassifierNodes> {
    if z.len() != x.rows() {
        return Err(Error::ShapeMismatch { op: "classify_selection", detail: format!("{} flags for {} words", z.len(), x.rows()) });
    }
    match selected_rows(x, z) {
        Some(rows) => {
            let xn = tape.constant(rows);
            let encoded = encode(tape, CLAS_ENCODER, &cfg.classifier, xn)?;
            classify_comment(tape, &encoded, Pooling::Final, CLAS_HEAD)
        }
        None => {
            let pooled = tape.constant(Tensor::zeros(&[1, cfg.classifier.output_dim()]));
            classify_pooled(tape, pooled, CLAS_HEAD)
        }
    }
}

/// `‖probs − onehot(label)‖²` as a `[1]` node.
pub fn classification_term(tape: &mut Tape, probs: NodeId, label: Label) -> Result<NodeId> {
    let target = tape.constant(Tensor::row(&label.one_hot()));
    let diff = tape.sub(probs, target)?;
    tape.squared_l2(diff)
}

/// Evaluates the objective for a given rationale `z`.
pub fn rationale_loss(params: &ParamStore, cfg: &JointConfig, x: &Tensor, z: &[bool], label: Label) -> Result<RationaleLossTerms> {
    let mut tape = Tape::new(params);
    let nodes = classify_selection(&mut tape, cfg, x, z)?;
    let cls = classification_term(&mut tape, nodes.probs, label)?;
    Ok(RationaleLossTerms::new(tape.value(cls).item(), z, cfg.lambda_sparsity, cfg.lambda_coherence))
}

/// Generator selection plus the rationale classifier on one tape.
#[derive(Debug, Clone)]
pub struct RationaleGraph {
    pub selection: Selection,
    pub class_probs: NodeId,
    /// Classification term as a `[1]` node.
    pub classification: NodeId,
    pub terms: RationaleLossTerms,
}

/// Builds generator states for `x` (once) and one rationale per `sources` entry.
pub fn rationale_graphs(
    tape: &mut Tape,
    cfg: &JointConfig,
    x: &Tensor,
    label: Label,
    sources: Vec<ZSource>,
) -> Result<Vec<RationaleGraph>> {
    if x.rows() == 0 {
        return Err(Error::EmptySequence);
    }
    let xn = tape.constant(x.clone());
    let hidden = generator_states(tape, cfg, xn)?;
    sources
        .into_iter()
        .map(|source| {
            let selection = select(tape, cfg, hidden, source)?;
            let nodes = classify_selection(tape, cfg, x, &selection.z)?;
            let classification = classification_term(tape, nodes.probs, label)?;
            let terms = RationaleLossTerms::new(
                tape.value(classification).item(),
                &selection.z,
                cfg.lambda_sparsity,
                cfg.lambda_coherence,
            );
            Ok(RationaleGraph { selection, class_probs: nodes.probs, classification, terms })
        })
        .collect()
}
