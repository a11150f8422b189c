//! First-derivative saliency baseline.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Overlay, Tape};
use crate::error::Result;
use crate::math;
use crate::models::ClassifierModel;
use crate::tensor::Tensor;
use crate::text::embed_sequence;

const INPUT: &str = "saliency.x";

/// Score of each row of `x`: the L2 norm of the gradient of the predicted
/// class probability with respect to that row.
pub fn saliency_scores_embedded(model: &ClassifierModel, x: Tensor) -> Result<Vec<f64>> {
    let k = x.rows();
    let mut input: BTreeMap<String, Tensor> = BTreeMap::new();
    input.insert(INPUT.to_string(), x);
    let bindings = Overlay { first: &input, second: &model.params };
    let mut tape = Tape::new(&bindings);
    let xn = tape.param(INPUT)?;
    let nodes = model.forward_embedded(&mut tape, xn)?;
    let probs = tape.value(nodes.probs).data();
    let predicted = usize::from(probs[1] >= 0.5);
    let picked = tape.slice(nodes.probs, 1, predicted, 1)?;
    let grads = tape.backward(picked)?;
    let g = grads.get(INPUT).expect("input gradient");
    Ok((0..k).map(|t| math::sqrt(g.row_slice(t).iter().map(|v| v * v).sum())).collect())
}

pub fn saliency_scores(model: &ClassifierModel, tokens: &[String]) -> Result<Vec<f64>> {
    let x = embed_sequence(tokens, model.table(), &model.config.embedding)?;
    saliency_scores_embedded(model, x)
}

/// Selects the top-scoring `fraction` of words in every comment. Per-comment
/// counts are `fraction · K` rounded by largest remainder so the overall count
/// is `round(fraction · ΣK)`. Ties go to the earlier word.
pub fn select_top_fraction(scores: &[Vec<f64>], fraction: f64) -> Vec<Vec<bool>> {
    let fraction = fraction.clamp(0.0, 1.0);
    let quotas: Vec<f64> = scores.iter().map(|s| fraction * s.len() as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| libm::floor(*q) as usize).collect();
    let total = libm::round(quotas.iter().sum::<f64>()) as usize;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - counts[a] as f64, quotas[b] - counts[b] as f64);
        rb.partial_cmp(&ra).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut missing = total.saturating_sub(counts.iter().sum());
    for &i in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if counts[i] < scores[i].len() {
            counts[i] += 1;
            missing -= 1;
        }
    }
    scores
        .iter()
        .zip(counts)
        .map(|(s, n)| {
            let mut idx: Vec<usize> = (0..s.len()).collect();
            idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b)));
            let mut z = vec![false; s.len()];
            for &i in idx.iter().take(n) {
                z[i] = true;
            }
            z
        })
        .collect()
}
