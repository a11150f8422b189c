use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::JointConfig;
use super::generator::{RationaleModel, ZSource, Z_BIAS};
use super::loss::{rationale_graphs, selected_count, RationaleLossTerms};
use super::reinforce::estimate_generator_gradient;
use crate::autodiff::{adam_step, AdamState, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;
use crate::text::{balanced_batches, embed_sequence, Comment, EmbeddingConfig, Label};

/// Thresholded-selection statistics over a validation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationCheck {
    /// Mean objective with `z_t = 1` iff `p_t ≥ 0.5`.
    pub loss: f64,
    pub selected_fraction: f64,
}

/// One line of the training log, written at every validation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRecord {
    pub attempt: usize,
    pub epoch: usize,
    pub step: usize,
    /// Mean sampled loss terms since the previous record.
    pub train: RationaleLossTerms,
    pub train_selected_fraction: f64,
    pub baseline: f64,
    pub val_loss: f64,
    pub val_selected_fraction: f64,
    pub degenerate_streak: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttemptOutcome {
    Completed,
    /// Stopped at this (1-based) validation check.
    Degenerate { check: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub attempt: usize,
    pub seed: u64,
    pub records: Vec<JointRecord>,
    pub outcome: AttemptOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    /// Every attempt ended degenerate.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub config: JointConfig,
    pub status: RunStatus,
    pub restarts: usize,
    pub attempts: Vec<AttemptLog>,
    /// Validation loss of the kept parameters.
    pub best_val_loss: Option<f64>,
}

impl TrainingRun {
    pub fn records(&self) -> impl Iterator<Item = &JointRecord> {
        self.attempts.iter().flat_map(|a| &a.records)
    }
}

#[derive(Debug, Clone)]
pub struct JointOutcome {
    /// Parameters of the converged attempt at its best validation check.
    pub model: Option<RationaleModel>,
    pub run: TrainingRun,
}

/// Word vectors for each comment from a (frozen) embedding table.
pub fn embed_comments(comments: &[Comment], table: &Tensor, cfg: &EmbeddingConfig) -> Result<Vec<Tensor>> {
    comments.iter().map(|c| embed_sequence(&c.tokens, table, cfg)).collect()
}

/// Loss and selected fraction with deterministic selections.
pub fn validation_check(model: &RationaleModel, xs: &[Tensor], labels: &[Label]) -> Result<ValidationCheck> {
    if xs.is_empty() {
        return Err(Error::InsufficientData("validation set is empty".into()));
    }
    let (mut loss, mut selected, mut words) = (0.0, 0, 0);
    for (x, &label) in xs.iter().zip(labels) {
        let mut tape = Tape::new(&model.params);
        let g = rationale_graphs(&mut tape, &model.config, x, label, alloc::vec![ZSource::Threshold])?;
        loss += g[0].terms.total;
        selected += selected_count(&g[0].selection.z);
        words += x.rows();
    }
    Ok(ValidationCheck { loss: loss / xs.len() as f64, selected_fraction: selected as f64 / words as f64 })
}

/// Jointly trains generator and rationale classifier with policy gradients.
///
/// An attempt whose validation selected fraction stays above `degenerate_high`
/// or below `degenerate_low` for `patience` consecutive checks is abandoned and
/// training restarts from the next seed, up to `max_restarts` times. The first
/// attempt that finishes all epochs is kept, with the parameters of its lowest
/// validation loss check. When every attempt degenerates the run reports
/// [`RunStatus::Failed`] and no model.
pub fn train_joint(
    train: &[Comment],
    validation: &[Comment],
    table: &Tensor,
    embedding: &EmbeddingConfig,
    cfg: &JointConfig,
) -> Result<JointOutcome> {
    cfg.validate()?;
    if validation.is_empty() {
        return Err(Error::InsufficientData("validation set is empty".into()));
    }
    let train_x = embed_comments(train, table, embedding)?;
    let val_x = embed_comments(validation, table, embedding)?;
    let val_labels: Vec<Label> = validation.iter().map(|c| c.label).collect();
    // Fail early on corpora that cannot be balanced.
    balanced_batches(train, cfg.batch_size, cfg.seed)?;

    let mut attempts = Vec::new();
    for attempt in 0..=cfg.max_restarts {
        let seed = cfg.seed.wrapping_add(attempt as u64);
        let (log, kept) = run_attempt(train, &train_x, &val_x, &val_labels, embedding.dim, cfg, attempt, seed)?;
        let completed = log.outcome == AttemptOutcome::Completed;
        attempts.push(log);
        if completed {
            let (best_val_loss, params) = kept.expect("completed attempts keep parameters");
            let model = RationaleModel { config: *cfg, params };
            let run = TrainingRun { config: *cfg, status: RunStatus::Converged, restarts: attempt, attempts, best_val_loss: Some(best_val_loss) };
            return Ok(JointOutcome { model: Some(model), run });
        }
    }
    let run = TrainingRun { config: *cfg, status: RunStatus::Failed, restarts: cfg.max_restarts, attempts, best_val_loss: None };
    Ok(JointOutcome { model: None, run })
}

#[allow(clippy::too_many_arguments)]
fn run_attempt(
    train: &[Comment],
    train_x: &[Tensor],
    val_x: &[Tensor],
    val_labels: &[Label],
    d_in: usize,
    cfg: &JointConfig,
    attempt: usize,
    seed: u64,
) -> Result<(AttemptLog, Option<(f64, ParamStore)>)> {
    let mut model = RationaleModel::init(*cfg, d_in, seed)?;
    let frozen: Vec<String> = model
        .params
        .iter()
        .filter(|(n, _)| (cfg.freeze_classifier && n.starts_with("clas.")) || (cfg.pinned_selection_bias.is_some() && *n == Z_BIAS))
        .map(|(n, _)| n.clone())
        .collect();
    let mut adam = AdamState::new(cfg.adam);
    let mut baseline: Option<f64> = None;
    let mut best: Option<(f64, ParamStore)> = None;
    let mut records = Vec::new();
    let (mut step, mut checks, mut streak) = (0usize, 0usize, 0usize);
    let mut window: Vec<RationaleLossTerms> = Vec::new();
    let (mut win_selected, mut win_words) = (0usize, 0usize);

    for epoch in 0..cfg.epochs {
        let batches = balanced_batches(train, cfg.batch_size, rng::mix(seed ^ rng::mix(epoch as u64 + 1)))?;
        for (bi, batch) in batches.iter().enumerate() {
            let pairs: Vec<(&Tensor, Label)> = batch.iter().map(|&i| (&train_x[i], train[i].label)).collect();
            let stream = rng::mix(seed ^ rng::mix(0x5eed ^ step as u64));
            let mut est = estimate_generator_gradient(&model.params, cfg, &pairs, baseline, stream)?;
            baseline = Some(match baseline {
                None => est.terms.total,
                Some(b) => cfg.baseline_decay * b + (1.0 - cfg.baseline_decay) * est.terms.total,
            });
            for name in &frozen {
                let shape = model.params.get(name).expect("frozen name exists").shape().to_vec();
                est.grads.insert(name.clone(), Tensor::zeros(&shape));
            }
            est.grads.clip_global_norm(cfg.clip_norm);
            adam_step(&mut model.params, &est.grads, &mut adam)?;
            model.apply_pin();
            step += 1;
            window.push(est.terms);
            win_selected += est.selected;
            win_words += est.words;

            let end_of_epoch = bi + 1 == batches.len();
            if !(end_of_epoch || (cfg.validate_every > 0 && step % cfg.validate_every == 0)) {
                continue;
            }
            let check = validation_check(&model, val_x, val_labels)?;
            checks += 1;
            let degenerate = check.selected_fraction > cfg.degenerate_high || check.selected_fraction < cfg.degenerate_low;
            streak = if degenerate { streak + 1 } else { 0 };
            records.push(JointRecord {
                attempt,
                epoch,
                step,
                train: RationaleLossTerms::mean(&window),
                train_selected_fraction: win_selected as f64 / win_words.max(1) as f64,
                baseline: baseline.unwrap_or(0.0),
                val_loss: check.loss,
                val_selected_fraction: check.selected_fraction,
                degenerate_streak: streak,
                restarts: attempt,
            });
            window.clear();
            (win_selected, win_words) = (0, 0);
            if streak >= cfg.patience {
                let log = AttemptLog { attempt, seed, records, outcome: AttemptOutcome::Degenerate { check: checks } };
                return Ok((log, None));
            }
            if !degenerate && best.as_ref().map_or(true, |(l, _)| check.loss < *l) {
                best = Some((check.loss, model.params.clone()));
            }
        }
    }
    // Every check was degenerate but the streak never reached the patience:
    // fall back to the final parameters.
    let kept = best.or_else(|| Some((records.last().map_or(f64::INFINITY, |r| r.val_loss), model.params.clone())));
    Ok((AttemptLog { attempt, seed, records, outcome: AttemptOutcome::Completed }, kept))
}
