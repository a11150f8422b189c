use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hashed character n-gram embedding layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub min_n: usize,
    pub max_n: usize,
    pub buckets: usize,
}

impl Default for EmbeddingConfig {
    /// fastText conventions: n-grams of 3 to 5 characters, 2^18 buckets, 100 dimensions.
    fn default() -> Self {
        EmbeddingConfig { dim: 100, min_n: 3, max_n: 5, buckets: 1 << 18 }
    }
}

impl EmbeddingConfig {
    /// Laptop-sized table used by the synthetic experiments.
    pub fn desk() -> Self {
        EmbeddingConfig { dim: 24, min_n: 3, max_n: 5, buckets: 1 << 18 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.buckets == 0 || self.min_n == 0 || self.min_n > self.max_n {
            return Err(Error::InvalidArgument(format!("invalid embedding config {self:?}")));
        }
        Ok(())
    }
}

/// 32-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in bytes {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

/// Character n-grams of `<token>` with lengths in `[min_n, max_n]`, in order
/// of length then position.
pub fn char_ngrams(token: &str, min_n: usize, max_n: usize) -> Vec<String> {
    let marked: Vec<char> = core::iter::once('<').chain(token.chars()).chain(core::iter::once('>')).collect();
    let mut out = Vec::new();
    for n in min_n..=max_n.min(marked.len()) {
        for w in marked.windows(n) {
            out.push(w.iter().collect());
        }
    }
    out
}

/// Bucket indices of the token's character n-grams (a multiset: repeated
/// n-grams and hash collisions both repeat indices). A token too short to
/// yield any n-gram is hashed whole, boundary markers included.
pub fn hash_ngrams(token: &str, cfg: &EmbeddingConfig) -> Vec<usize> {
    let grams = char_ngrams(token, cfg.min_n, cfg.max_n);
    if grams.is_empty() {
        let whole = format!("<{token}>");
        return alloc::vec![fnv1a(whole.as_bytes()) as usize % cfg.buckets];
    }
    grams.iter().map(|g| fnv1a(g.as_bytes()) as usize % cfg.buckets).collect()
}
