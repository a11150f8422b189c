use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use crate::error::{Error, Result};
use crate::rng;

/// Comments longer than this are clipped.
pub const MAX_TOKENS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Appropriate,
    Inappropriate,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Appropriate => 0,
            Label::Inappropriate => 1,
        }
    }

    pub fn is_inappropriate(self) -> bool {
        self == Label::Inappropriate
    }

    /// One-hot `[appropriate, inappropriate]`.
    pub fn one_hot(self) -> [f64; 2] {
        match self {
            Label::Appropriate => [1.0, 0.0],
            Label::Inappropriate => [0.0, 1.0],
        }
    }
}

/// Violation categories a moderator can cite when removing a comment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reason {
    Insults,
    Racism,
    Profanity,
    Spam,
}

impl Reason {
    pub const ALL: [Reason; 4] = [Reason::Insults, Reason::Racism, Reason::Profanity, Reason::Spam];

    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Insults => "insults",
            Reason::Racism => "racism",
            Reason::Profanity => "profanity",
            Reason::Spam => "spam",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Reason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Reason::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown reason `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub label: Label,
    pub reasons: Vec<Reason>,
    /// Token indices of the gold rationale, when annotated.
    pub gold_spans: Option<Vec<usize>>,
    pub timestamp: u64,
}

impl Comment {
    /// Tokenizes `text` (clipping to [`MAX_TOKENS`]) and checks the invariants.
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        label: Label,
        reasons: Vec<Reason>,
        gold_spans: Option<Vec<usize>>,
        timestamp: u64,
    ) -> Result<Self> {
        let text = text.into();
        let mut tokens = tokenize(&text);
        tokens.truncate(MAX_TOKENS);
        let mut comment = Comment { id: id.into(), text, tokens, label, reasons, gold_spans, timestamp };
        if let Some(spans) = comment.gold_spans.as_mut() {
            spans.sort_unstable();
            spans.dedup();
            spans.retain(|&i| i < MAX_TOKENS);
        }
        comment.reasons.sort_unstable();
        comment.reasons.dedup();
        comment.validate()?;
        Ok(comment)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::InvalidArgument(format!("comment `{}` has no tokens", self.id)));
        }
        if let Some(spans) = &self.gold_spans {
            if let Some(&bad) = spans.iter().find(|&&i| i >= self.tokens.len()) {
                return Err(Error::InvalidArgument(format!(
                    "comment `{}`: gold index {bad} beyond {} tokens",
                    self.id,
                    self.tokens.len()
                )));
            }
        }
        if !self.reasons.is_empty() && self.label == Label::Appropriate {
            return Err(Error::InvalidArgument(format!("comment `{}`: reasons on an appropriate comment", self.id)));
        }
        Ok(())
    }

    /// Gold flags per token, if annotated.
    pub fn gold_mask(&self) -> Option<Vec<bool>> {
        self.gold_spans.as_ref().map(|spans| {
            let mut mask = alloc::vec![false; self.tokens.len()];
            spans.iter().for_each(|&i| mask[i] = true);
            mask
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMeta {
    pub seed: u64,
    /// Size of the most recent slice of the corpus validation/test were drawn from.
    pub recent_pool: usize,
    pub validation_per_class: usize,
    pub test_per_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<Comment>,
    pub validation: Vec<Comment>,
    pub test: Vec<Comment>,
    pub meta: SplitMeta,
}

/// Class-balanced validation and test sets drawn from the most recent
/// comments; everything else is training data.
///
/// The recent pool is the shortest suffix (by timestamp, then corpus order)
/// holding at least twice the required count of each class, or the whole
/// corpus if no shorter suffix does. From it `(val_size + test_size) / 2`
/// comments per class are sampled without replacement.
pub fn split_corpus(corpus: &[Comment], val_size: usize, test_size: usize, seed: u64) -> Result<CorpusSplit> {
    if val_size % 2 != 0 || test_size % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "validation ({val_size}) and test ({test_size}) sizes must be even to balance classes"
        )));
    }
    let (val_pc, test_pc) = (val_size / 2, test_size / 2);
    let need = val_pc + test_pc;

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.sort_by_key(|&i| (corpus[i].timestamp, i));

    let total = |label: Label| corpus.iter().filter(|c| c.label == label).count();
    for label in [Label::Appropriate, Label::Inappropriate] {
        if total(label) < need {
            return Err(Error::InsufficientData(format!(
                "need {need} {label:?} comments for balanced validation/test, corpus has {}",
                total(label)
            )));
        }
    }

    let mut counts = [0usize; 2];
    let mut pool_start = 0;
    for (pos, &i) in order.iter().enumerate().rev() {
        counts[corpus[i].label.index()] += 1;
        pool_start = pos;
        if counts.iter().all(|&c| c >= 2 * need) {
            break;
        }
    }
    let pool = &order[pool_start..];

    let mut rng = rng::derived(seed, 0x5011, 0);
    let mut chosen = alloc::vec![false; corpus.len()];
    let mut validation = Vec::with_capacity(val_size);
    let mut test = Vec::with_capacity(test_size);
    for label in [Label::Appropriate, Label::Inappropriate] {
        let mut members: Vec<usize> = pool.iter().copied().filter(|&i| corpus[i].label == label).collect();
        members.shuffle(&mut rng);
        for (k, &i) in members.iter().take(need).enumerate() {
            chosen[i] = true;
            if k < val_pc {
                validation.push(corpus[i].clone());
            } else {
                test.push(corpus[i].clone());
            }
        }
    }
    validation.shuffle(&mut rng);
    test.shuffle(&mut rng);
    let train = corpus.iter().zip(&chosen).filter(|(_, &c)| !c).map(|(c, _)| c.clone()).collect();

    Ok(CorpusSplit {
        train,
        validation,
        test,
        meta: SplitMeta { seed, recent_pool: pool.len(), validation_per_class: val_pc, test_per_class: test_pc },
    })
}

/// One epoch of class-balanced batches as indices into `train`.
///
/// Every batch holds `batch_size / 2` comments of each class. The larger class
/// is shuffled and covered once (exactly once when its size divides evenly;
/// otherwise the last batch is topped up with re-drawn items). The smaller class
/// is supersampled: it is drawn from reshuffled passes over its members, so its
/// items repeat roughly `majority / minority` times.
pub fn balanced_batches(train: &[Comment], batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 || batch_size % 2 != 0 {
        return Err(Error::InvalidArgument(format!("batch size must be even and >= 2, got {batch_size}")));
    }
    let half = batch_size / 2;
    let by_class = |label: Label| -> Vec<usize> { (0..train.len()).filter(|&i| train[i].label == label).collect() };
    let (appropriate, inappropriate) = (by_class(Label::Appropriate), by_class(Label::Inappropriate));
    if appropriate.is_empty() || inappropriate.is_empty() {
        return Err(Error::InsufficientData("training data must contain both classes".into()));
    }
    let (mut major, mut minor) = if appropriate.len() >= inappropriate.len() {
        (appropriate, inappropriate)
    } else {
        (inappropriate, appropriate)
    };

    let mut rng = rng::derived(seed, 0xba7c, 0);
    major.shuffle(&mut rng);
    let n_batches = major.len().div_ceil(half);
    let mut major_stream = major.clone();
    while major_stream.len() < n_batches * half {
        let mut extra = major.clone();
        extra.shuffle(&mut rng);
        let missing = n_batches * half - major_stream.len();
        major_stream.extend(extra.into_iter().take(missing));
    }

    let mut minor_stream = Vec::with_capacity(n_batches * half);
    while minor_stream.len() < n_batches * half {
        minor.shuffle(&mut rng);
        let missing = n_batches * half - minor_stream.len();
        minor_stream.extend(minor.iter().copied().take(missing));
    }

    Ok((0..n_batches)
        .map(|b| {
            let mut batch: Vec<usize> = major_stream[b * half..(b + 1) * half]
                .iter()
                .chain(&minor_stream[b * half..(b + 1) * half])
                .copied()
                .collect();
            batch.shuffle(&mut rng);
            batch
        })
        .collect())
}
