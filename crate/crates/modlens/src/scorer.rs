use std::path::Path;

use modlens_core::models::ClassifierModel;
use modlens_core::rationale::{highlight_comment, RationaleModel};
use modlens_core::text::{tokenize_with_offsets, TokenSpan, MAX_TOKENS};
use serde::Serialize;

use crate::checkpoint::{load_classifier, load_rationale};
use crate::error::Result;
use crate::store::HighlightSpan;

/// Classifier and rationale generator loaded together for serving.
#[derive(Debug, Clone)]
pub struct Scorer {
    pub classifier: ClassifierModel,
    pub rationale: RationaleModel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scored {
    pub probability: f64,
    pub tokens: Vec<String>,
    pub spans: Vec<HighlightSpan>,
    pub log_prob: f64,
}

impl Scorer {
    pub fn load(classifier: &Path, rationale: &Path) -> Result<Self> {
        let (classifier, _) = load_classifier(classifier)?;
        let (rationale, _) = load_rationale(rationale, classifier.config.embedding.dim)?;
        Ok(Scorer { classifier, rationale })
    }

    /// Scores and highlights raw text. Fails with `EmptySequence` when the
    /// text has no tokens.
    pub fn score(&self, text: &str) -> modlens_core::Result<Scored> {
        let mut offsets = tokenize_with_offsets(text);
        offsets.truncate(MAX_TOKENS);
        let tokens: Vec<String> = offsets.iter().map(|t| t.token.clone()).collect();
        let h = highlight_comment(&self.classifier, &self.rationale, &tokens)?;
        Ok(Scored {
            probability: h.probability,
            spans: char_spans(&offsets, &h.rationale.spans),
            tokens,
            log_prob: h.rationale.log_prob,
        })
    }
}

/// Attaches character ranges to inclusive token runs.
pub fn char_spans(tokens: &[TokenSpan], runs: &[(usize, usize)]) -> Vec<HighlightSpan> {
    runs.iter()
        .map(|&(a, b)| HighlightSpan { start_token: a, end_token: b, start: tokens[a].start, end: tokens[b].end })
        .collect()
}
