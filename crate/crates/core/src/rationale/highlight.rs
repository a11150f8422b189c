use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::generator::{generator_states, select, RationaleModel, ZSource};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::models::ClassifierModel;
use crate::text::embed_sequence;

/// Maximal runs of set flags as inclusive `(start, end)` index pairs.
pub fn spans(z: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &on) in z.iter().enumerate() {
        match (on, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push((s, t - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, z.len() - 1));
    }
    out
}

/// Mean length of the maximal selected runs; `None` without selections.
pub fn mean_segment_length(z: &[bool]) -> Option<f64> {
    let s = spans(z);
    if s.is_empty() {
        return None;
    }
    Some(s.iter().map(|(a, b)| (b - a + 1) as f64).sum::<f64>() / s.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rationale {
    pub z: Vec<bool>,
    /// `ln p(z | x)` under the generator.
    pub log_prob: f64,
    pub spans: Vec<(usize, usize)>,
}

impl Rationale {
    pub fn new(z: Vec<bool>, log_prob: f64) -> Self {
        let spans = spans(&z);
        Rationale { z, log_prob, spans }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    /// Probability of the comment being inappropriate.
    pub probability: f64,
    pub rationale: Rationale,
}

/// Serving-time rationale: selects exactly the words with `p_t ≥ 0.5`.
pub fn deterministic_rationale(model: &RationaleModel, x: &crate::Tensor) -> Result<Rationale> {
    let mut tape = Tape::new(&model.params);
    let xn = tape.constant(x.clone());
    let hidden = generator_states(&mut tape, &model.config, xn)?;
    let sel = select(&mut tape, &model.config, hidden, ZSource::Threshold)?;
    let log_prob = tape.value(sel.log_prob).item();
    Ok(Rationale::new(sel.z, log_prob))
}

/// Scores a tokenized comment with the classifier and highlights it with the
/// generator. Both read the classifier's embedding table.
pub fn highlight_comment(classifier: &ClassifierModel, rationale: &RationaleModel, tokens: &[String]) -> Result<Highlight> {
    if tokens.is_empty() {
        return Err(Error::EmptySequence);
    }
    let probability = classifier.classify_tokens(tokens)?.p_inappropriate;
    let x = embed_sequence(tokens, classifier.table(), &classifier.config.embedding)?;
    Ok(Highlight { probability, rationale: deterministic_rationale(rationale, &x)? })
}
