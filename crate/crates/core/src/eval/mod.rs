//! Classification and rationale metrics, and the evaluation report.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{predict, ClassifierModel};
use crate::rationale::{deterministic_rationale, saliency_scores, select_top_fraction, spans, RationaleModel};
use crate::text::{embed_sequence, Comment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Descending order by score; equal scores keep their input order.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(core::cmp::Ordering::Equal));
    idx
}

/// ROC curve with one point per distinct score (tied scores form one step)
/// and its trapezoidal area.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = class_counts(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::InsufficientData("ROC needs both classes".into()));
    }
    let order = ranked(scores);
    let mut points = alloc::vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = trapezoid(&points);
    Ok(RocCurve { points, auc })
}

pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

/// Mean over positives of the precision at their rank. Ties are ranked in
/// input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = class_counts(scores, labels)?;
    if pos == 0 {
        return Err(Error::InsufficientData("average precision needs a positive".into()));
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in ranked(scores).iter().enumerate() {
        if labels[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / pos as f64)
}

pub fn accuracy(predicted: &[bool], labels: &[bool]) -> Result<f64> {
    if predicted.len() != labels.len() || labels.is_empty() {
        return Err(Error::InvalidArgument("accuracy needs equally long, non-empty inputs".into()));
    }
    Ok(predicted.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleReport {
    /// Selected gold words over selected words, pooled over comments;
    /// `None` when nothing was selected.
    pub precision: Option<f64>,
    pub selected_fraction: f64,
    /// Mean length of maximal selected runs; `None` when nothing was selected.
    pub mean_segment_length: Option<f64>,
    pub selected: usize,
    pub selected_gold: usize,
    pub words: usize,
}

/// Pooled rationale metrics. `gold[i]` holds the gold word indices of comment `i`.
pub fn rationale_metrics(predicted: &[Vec<bool>], gold: &[Option<Vec<usize>>]) -> Result<RationaleReport> {
    if predicted.len() != gold.len() {
        return Err(Error::InvalidArgument(format!("{} rationales for {} gold annotations", predicted.len(), gold.len())));
    }
    let (mut selected, mut hits, mut words) = (0, 0, 0);
    let (mut seg_total, mut seg_count) = (0, 0);
    for (z, g) in predicted.iter().zip(gold) {
        let g = g.as_ref().ok_or_else(|| Error::InsufficientData("comment without gold rationale".into()))?;
        words += z.len();
        for (t, &on) in z.iter().enumerate() {
            if on {
                selected += 1;
                if g.contains(&t) {
                    hits += 1;
                }
            }
        }
        for (a, b) in spans(z) {
            seg_total += b - a + 1;
            seg_count += 1;
        }
    }
    if words == 0 {
        return Err(Error::InsufficientData("no words to evaluate".into()));
    }
    Ok(RationaleReport {
        precision: (selected > 0).then(|| hits as f64 / selected as f64),
        selected_fraction: selected as f64 / words as f64,
        mean_segment_length: (seg_count > 0).then(|| seg_total as f64 / seg_count as f64),
        selected,
        selected_gold: hits,
        words,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub auc: f64,
    pub average_precision: f64,
    pub roc: RocCurve,
}

pub fn classification_report(p_inappropriate: &[f64], labels: &[bool]) -> Result<ClassificationReport> {
    let predicted: Vec<bool> = p_inappropriate.iter().map(|&p| p >= 0.5).collect();
    let roc = roc_auc(p_inappropriate, labels)?;
    Ok(ClassificationReport {
        accuracy: accuracy(&predicted, labels)?,
        auc: roc.auc,
        average_precision: average_precision(p_inappropriate, labels)?,
        roc,
    })
}

/// One point of a precision versus selected-fraction series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    /// `rationale` or `saliency`.
    pub method: String,
    /// Name of the rationale model this point belongs to (the saliency point
    /// is matched to that model's selected fraction).
    pub setting: String,
    pub report: RationaleReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub classification: ClassificationReport,
    pub series: Vec<SeriesPoint>,
}

/// Classification metrics on `test` plus, for every named rationale model,
/// its rationale metrics on `highlights` next to the saliency baseline at the
/// same selected fraction.
pub fn evaluate_model(
    classifier: &ClassifierModel,
    rationales: &[(String, &RationaleModel)],
    test: &[Comment],
    highlights: &[Comment],
) -> Result<EvaluationReport> {
    let probs: Vec<f64> = predict(classifier, test)?.iter().map(|o| o.p_inappropriate).collect();
    let labels: Vec<bool> = test.iter().map(|c| c.label.is_inappropriate()).collect();
    let classification = classification_report(&probs, &labels)?;

    let mut series = Vec::new();
    if rationales.is_empty() {
        return Ok(EvaluationReport { classification, series });
    }
    if highlights.is_empty() || highlights.iter().any(|c| c.gold_spans.is_none()) {
        return Err(Error::InsufficientData("highlights set missing or lacking gold rationales".into()));
    }
    let gold: Vec<Option<Vec<usize>>> = highlights.iter().map(|c| c.gold_spans.clone()).collect();
    let xs = highlights
        .iter()
        .map(|c| embed_sequence(&c.tokens, classifier.table(), &classifier.config.embedding))
        .collect::<Result<Vec<_>>>()?;
    let saliency = highlights.iter().map(|c| saliency_scores(classifier, &c.tokens)).collect::<Result<Vec<_>>>()?;
    for (name, model) in rationales {
        let z = xs.iter().map(|x| deterministic_rationale(model, x).map(|r| r.z)).collect::<Result<Vec<_>>>()?;
        let report = rationale_metrics(&z, &gold)?;
        let baseline = rationale_metrics(&select_top_fraction(&saliency, report.selected_fraction), &gold)?;
        series.push(SeriesPoint { method: "rationale".into(), setting: name.clone(), report });
        series.push(SeriesPoint { method: "saliency".into(), setting: name.clone(), report: baseline });
    }
    Ok(EvaluationReport { classification, series })
}

/// `fpr,tpr` rows.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (x, y) in &curve.points {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

/// `selected_fraction,precision,method` rows; undefined precision is left empty.
pub fn series_csv(series: &[SeriesPoint]) -> String {
    let mut out = String::from("selected_fraction,precision,method\n");
    for p in series {
        let precision = p.report.precision.map(|v| format!("{v}")).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", p.report.selected_fraction, precision, p.method);
    }
    out
}
