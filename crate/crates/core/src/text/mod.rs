//! Tokenization, hashed sub-word embeddings, corpora and batching.

mod corpus;
mod embed;
mod ngram;
mod synth;
mod tokenize;

pub use corpus::{balanced_batches, split_corpus, Comment, CorpusSplit, Label, Reason, SplitMeta, MAX_TOKENS};
pub use embed::{embed_sequence, token_bags};
pub use ngram::{char_ngrams, fnv1a, hash_ngrams, EmbeddingConfig};
pub use synth::{generate_synthetic_corpus, obfuscate_token, obfuscate_toxic_tokens, SynthConfig, SyntheticCorpus};
pub use tokenize::{tokenize, tokenize_with_offsets, TokenSpan};
