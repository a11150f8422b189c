//! Rationale extraction: a generator proposes which words to keep, a second
//! classifier reads only those words, and both are trained together with
//! policy gradients. Also holds the saliency baseline.

mod config;
mod generator;
mod highlight;
mod loss;
mod reinforce;
mod saliency;
mod train;

pub use config::JointConfig;
pub use generator::{generator_states, select, RationaleModel, Selection, ZSource, CLAS_ENCODER, CLAS_HEAD, GEN_ENCODER, Z_BIAS};
pub use highlight::{deterministic_rationale, highlight_comment, mean_segment_length, spans, Highlight, Rationale};
pub use loss::{
    classification_term, classify_selection, rationale_graphs, rationale_loss, selected_count, selected_rows,
    transitions, RationaleGraph, RationaleLossTerms,
};
pub use reinforce::{estimate_generator_gradient, GradientEstimate};
pub use saliency::{saliency_scores, saliency_scores_embedded, select_top_fraction};
pub use train::{
    embed_comments, train_joint, validation_check, AttemptLog, AttemptOutcome, JointOutcome, JointRecord, RunStatus,
    TrainingRun, ValidationCheck,
};
