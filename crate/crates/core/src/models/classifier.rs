//! Step-1 comment classifier: hashed n-gram embeddings, a recurrent encoder and
//! a softmax head over {appropriate, inappropriate}.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{encode, init_encoder, Encoded, EncoderConfig, Pooling};
use super::init::{glorot, uniform, zeros};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Gradients, NodeId, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;
use crate::text::{balanced_batches, token_bags, Comment, EmbeddingConfig, Label};

pub const TABLE: &str = "embed.table";
pub const ENCODER: &str = "enc";
pub const HEAD: &str = "head";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub embedding: EmbeddingConfig,
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub pooling: Pooling,
}

impl ClassifierConfig {
    pub fn paper() -> Self {
        ClassifierConfig { embedding: EmbeddingConfig::default(), encoder: EncoderConfig::paper(), pooling: Pooling::Final }
    }

    pub fn desk() -> Self {
        ClassifierConfig { embedding: EmbeddingConfig::desk(), encoder: EncoderConfig::desk(), pooling: Pooling::Final }
    }

    pub fn validate(&self) -> Result<()> {
        self.embedding.validate()?;
        self.encoder.validate()
    }
}

/// Class distribution for one comment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutput {
    /// `[appropriate, inappropriate]`.
    pub probs: [f64; 2],
    pub p_inappropriate: f64,
}

impl ClassifierOutput {
    pub fn from_probs(t: &Tensor) -> Self {
        let probs = [t.data()[0], t.data()[1]];
        ClassifierOutput { probs, p_inappropriate: probs[1] }
    }

    pub fn label(&self) -> Label {
        if self.p_inappropriate >= 0.5 {
            Label::Inappropriate
        } else {
            Label::Appropriate
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifierNodes {
    pub pooled: NodeId,
    /// `1 × 2` logits.
    pub logits: NodeId,
    /// `1 × 2` softmax of the logits.
    pub probs: NodeId,
}

pub fn init_head(params: &mut ParamStore, prefix: &str, input: usize, rng: &mut impl Rng) {
    params.insert(format!("{prefix}.w"), glorot(rng, input, 2));
    params.insert(format!("{prefix}.b"), zeros(1, 2));
}

/// Softmax head over a pooled `1 × H` summary.
pub fn classify_pooled(tape: &mut Tape, pooled: NodeId, prefix: &str) -> Result<ClassifierNodes> {
    let w = tape.param(&format!("{prefix}.w"))?;
    let b = tape.param(&format!("{prefix}.b"))?;
    let logits = tape.matmul(pooled, w)?;
    let logits = tape.add(logits, b)?;
    let probs = tape.softmax(logits)?;
    Ok(ClassifierNodes { pooled, logits, probs })
}

/// Pools the encoder states and applies the softmax head.
pub fn classify_comment(tape: &mut Tape, encoded: &Encoded, pooling: Pooling, prefix: &str) -> Result<ClassifierNodes> {
    let pooled = encoded.pooled(tape, pooling)?;
    classify_pooled(tape, pooled, prefix)
}

/// Cross-entropy `−ln p(label)` as a `[1]` node.
pub fn classifier_loss(tape: &mut Tape, nodes: &ClassifierNodes, label: Label) -> Result<NodeId> {
    // ln p(inappropriate) = ln σ(l1 − l0) for a two-way softmax.
    let diff = tape.constant(Tensor::new(vec![2, 1], vec![-1.0, 1.0])?);
    let margin = tape.matmul(nodes.logits, diff)?;
    let lp = tape.bernoulli_log_prob(margin, vec![label.is_inappropriate()])?;
    tape.scale(lp, -1.0)
}

/// Configuration plus trained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub config: ClassifierConfig,
    pub params: ParamStore,
}

impl ClassifierModel {
    pub fn init(config: ClassifierConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::derived(seed, 0xc1a5, 0);
        let mut params = ParamStore::new();
        let e = config.embedding;
        let a = 1.0 / e.dim as f64;
        params.insert(TABLE, uniform(&mut rng, e.buckets, e.dim, a));
        init_encoder(&mut params, ENCODER, &config.encoder, e.dim, &mut rng);
        init_head(&mut params, HEAD, config.encoder.output_dim(), &mut rng);
        Ok(ClassifierModel { config, params })
    }

    pub fn table(&self) -> &Tensor {
        self.params.get(TABLE).expect("embedding table present")
    }

    /// Builds the classifier from the bucket lists of each token.
    pub fn forward_bags(&self, tape: &mut Tape, bags: Vec<Vec<usize>>) -> Result<ClassifierNodes> {
        if bags.is_empty() {
            return Err(Error::EmptySequence);
        }
        let table = tape.param(TABLE)?;
        let x = tape.embedding_bag(table, bags)?;
        self.forward_embedded(tape, x)
    }

    pub fn forward(&self, tape: &mut Tape, tokens: &[alloc::string::String]) -> Result<ClassifierNodes> {
        self.forward_bags(tape, token_bags(tokens, &self.config.embedding))
    }

    /// Builds the classifier on an already embedded `K × dim` node.
    pub fn forward_embedded(&self, tape: &mut Tape, x: NodeId) -> Result<ClassifierNodes> {
        let encoded = encode(tape, ENCODER, &self.config.encoder, x)?;
        classify_comment(tape, &encoded, self.config.pooling, HEAD)
    }

    pub fn classify_tokens(&self, tokens: &[alloc::string::String]) -> Result<ClassifierOutput> {
        let mut tape = Tape::new(&self.params);
        let nodes = self.forward(&mut tape, tokens)?;
        Ok(ClassifierOutput::from_probs(tape.value(nodes.probs)))
    }
}

pub fn predict(model: &ClassifierModel, comments: &[Comment]) -> Result<Vec<ClassifierOutput>> {
    comments.iter().map(|c| model.classify_tokens(&c.tokens)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    /// Probability of swapping each n-gram bucket for a random one during
    /// training. Keeps the classifier from depending on every n-gram of a word.
    pub ngram_corruption: f64,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        ClassifierTrainConfig { epochs: 3, batch_size: 32, adam: AdamConfig::default(), clip_norm: 5.0, ngram_corruption: 0.4, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (lowest validation loss).
    pub best_epoch: usize,
}

/// Replaces each n-gram bucket with a uniformly random one with probability `p`.
fn corrupt_ngrams(bags: &[Vec<usize>], p: f64, buckets: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    if p <= 0.0 {
        return bags.to_vec();
    }
    bags.iter()
        .map(|bag| bag.iter().map(|&b| if rng.gen_bool(p) { rng.gen_range(0..buckets) } else { b }).collect())
        .collect()
}

/// Mean cross-entropy and accuracy over precomputed bucket lists.
fn evaluate(model: &ClassifierModel, bags: &[Vec<Vec<usize>>], labels: &[Label]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (b, &label) in bags.iter().zip(labels) {
        let mut tape = Tape::new(&model.params);
        let nodes = model.forward_bags(&mut tape, b.clone())?;
        let l = classifier_loss(&mut tape, &nodes, label)?;
        loss += tape.value(l).item();
        if ClassifierOutput::from_probs(tape.value(nodes.probs)).label() == label {
            correct += 1;
        }
    }
    let n = labels.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Supervised training on class-balanced batches with Adam and global-norm
/// clipping. Returns the parameters of the epoch with the lowest validation loss.
pub fn train_classifier(
    config: ClassifierConfig,
    train: &[Comment],
    validation: &[Comment],
    tc: &ClassifierTrainConfig,
) -> Result<(ClassifierModel, ClassifierTrainLog)> {
    if validation.is_empty() {
        return Err(Error::InsufficientData("validation set is empty".into()));
    }
    if tc.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be positive".into()));
    }
    let mut model = ClassifierModel::init(config, tc.seed)?;
    let emb = config.embedding;
    let train_bags: Vec<_> = train.iter().map(|c| token_bags(&c.tokens, &emb)).collect();
    let val_bags: Vec<_> = validation.iter().map(|c| token_bags(&c.tokens, &emb)).collect();
    let val_labels: Vec<Label> = validation.iter().map(|c| c.label).collect();

    let mut adam = AdamState::new(tc.adam);
    let mut corrupt_rng = rng::derived(tc.seed, 0xd70, 0);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut records = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        let batches = balanced_batches(train, tc.batch_size, rng::mix(tc.seed ^ rng::mix(epoch as u64)))?;
        let mut total = 0.0;
        let mut seen = 0usize;
        for batch in &batches {
            let mut grads = Gradients::zeros_like(&model.params);
            let inv = 1.0 / batch.len() as f64;
            for &i in batch {
                let mut tape = Tape::new(&model.params);
                let bags = corrupt_ngrams(&train_bags[i], tc.ngram_corruption, emb.buckets, &mut corrupt_rng);
                let nodes = model.forward_bags(&mut tape, bags)?;
                let loss = classifier_loss(&mut tape, &nodes, train[i].label)?;
                total += tape.value(loss).item();
                tape.backward_into(loss, &mut grads, inv)?;
            }
            seen += batch.len();
            grads.clip_global_norm(tc.clip_norm);
            adam_step(&mut model.params, &grads, &mut adam)?;
        }
        let (val_loss, val_accuracy) = evaluate(&model, &val_bags, &val_labels)?;
        records.push(EpochRecord { epoch, train_loss: total / seen.max(1) as f64, val_loss, val_accuracy });
        if best.as_ref().map_or(true, |(l, _, _)| val_loss < *l) {
            best = Some((val_loss, epoch, model.params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    model.params = params;
    Ok((model, ClassifierTrainLog { epochs: records, best_epoch }))
}
