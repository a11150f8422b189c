use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::ngram::{hash_ngrams, EmbeddingConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Bucket lists for each token, ready for an embedding-bag lookup.
pub fn token_bags(tokens: &[String], cfg: &EmbeddingConfig) -> Vec<Vec<usize>> {
    tokens.iter().map(|t| hash_ngrams(t, cfg)).collect()
}

/// `K × dim` matrix whose row `t` is the mean of the table rows of token `t`'s
/// n-gram buckets.
pub fn embed_sequence(tokens: &[String], table: &Tensor, cfg: &EmbeddingConfig) -> Result<Tensor> {
    if tokens.is_empty() {
        return Err(Error::EmptySequence);
    }
    if table.shape() != [cfg.buckets, cfg.dim] {
        return Err(Error::ShapeMismatch {
            op: "embed_sequence",
            detail: format!("table {:?}, expected [{}, {}]", table.shape(), cfg.buckets, cfg.dim),
        });
    }
    let d = cfg.dim;
    let mut out = vec![0.0; tokens.len() * d];
    for (row, bag) in out.chunks_mut(d).zip(token_bags(tokens, cfg)) {
        for &b in &bag {
            for (o, x) in row.iter_mut().zip(table.row_slice(b)) {
                *o += x;
            }
        }
        let inv = 1.0 / bag.len() as f64;
        row.iter_mut().for_each(|o| *o *= inv);
    }
    Tensor::new(vec![tokens.len(), d], out)
}
