//! Interpretable comment moderation models.
//!
//! This crate holds the numerical core: a small reverse-mode differentiation
//! engine with Adam, the text pipeline (tokenizer, hashed character n-gram
//! embeddings, corpus splitting and balanced batching, synthetic corpora),
//! RCNN/LSTM encoders with a binary classification head, the rationale
//! generator/classifier pair trained with policy gradients, a first-derivative
//! saliency baseline, and the evaluation metrics.
//!
//! It is `no_std` compatible (it needs `alloc`). File formats, the command
//! line and the moderation service live in the `modlens` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod math;
pub mod models;
pub mod rationale;
pub mod rng;
pub mod tensor;
pub mod text;

pub use error::{Error, Result};
pub use tensor::Tensor;
