//! The generator: an encoder over the comment followed by a recurrent selection
//! layer that turns each hidden state into a selection probability.
//!
//! ```text
//! logit_t = h_t w_h + s_{t−1} w_s + b
//! s_t     = tanh(h_t R_h + z_t r_z + s_{t−1} R_s + r_b)
//! ```
//!
//! With independent selection the `s` terms are dropped.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::JointConfig;
use crate::autodiff::{NodeId, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::math;
use crate::models::{encode, glorot, init_encoder, init_head, zeros};
use crate::rng;
use crate::tensor::Tensor;

pub const GEN_ENCODER: &str = "gen.enc";
pub const CLAS_ENCODER: &str = "clas.enc";
pub const CLAS_HEAD: &str = "clas.head";
pub const Z_BIAS: &str = "gen.z.b";

/// Generator and rationale classifier parameters with their configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleModel {
    pub config: JointConfig,
    pub params: ParamStore,
}

impl RationaleModel {
    /// Fresh parameters for word vectors of width `d_in`.
    pub fn init(config: JointConfig, d_in: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::derived(seed, 0x6e4, 0);
        let mut params = ParamStore::new();
        init_encoder(&mut params, GEN_ENCODER, &config.generator, d_in, &mut r);
        let (h, s) = (config.generator.output_dim(), config.z_hidden);
        params.insert("gen.z.w_h", glorot(&mut r, h, 1));
        params.insert("gen.z.w_s", glorot(&mut r, s, 1));
        params.insert(Z_BIAS, zeros(1, 1));
        params.insert("gen.z.rec_h", glorot(&mut r, h, s));
        params.insert("gen.z.rec_z", glorot(&mut r, 1, s));
        params.insert("gen.z.rec_s", glorot(&mut r, s, s));
        params.insert("gen.z.rec_b", zeros(1, s));
        init_encoder(&mut params, CLAS_ENCODER, &config.classifier, d_in, &mut r);
        init_head(&mut params, CLAS_HEAD, config.classifier.output_dim(), &mut r);
        let mut model = RationaleModel { config, params };
        model.apply_pin();
        Ok(model)
    }

    /// Restores a pinned selection bias.
    pub fn apply_pin(&mut self) {
        if let Some(b) = self.config.pinned_selection_bias {
            self.params.insert(Z_BIAS, Tensor::full(&[1, 1], b));
        }
    }

    /// Selection probabilities along the deterministic (thresholded) path.
    pub fn select_probs(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.params);
        let xn = tape.constant(x.clone());
        let hidden = generator_states(&mut tape, &self.config, xn)?;
        Ok(select(&mut tape, &self.config, hidden, ZSource::Threshold)?.probs)
    }
}

/// How each `z_t` is chosen while the selection layer runs.
pub enum ZSource<'r> {
    /// `z_t ~ Bernoulli(p_t)`.
    Sample(&'r mut rng::Rng),
    /// Given selections, e.g. to score a rationale.
    Fixed(&'r [bool]),
    /// `z_t = 1` iff `p_t ≥ 0.5`.
    Threshold,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub z: Vec<bool>,
    /// `p(z_t = 1 | x, z_{<t})`.
    pub probs: Vec<f64>,
    /// `K × 1` selection logits.
    pub logits: NodeId,
    /// `ln p(z | x)` as a `[1]` node.
    pub log_prob: NodeId,
}

/// `K × H` generator hidden states over the word vectors `x`.
pub fn generator_states(tape: &mut Tape, cfg: &JointConfig, x: NodeId) -> Result<NodeId> {
    Ok(encode(tape, GEN_ENCODER, &cfg.generator, x)?.outputs)
}

/// Runs the selection layer over the generator states.
pub fn select(tape: &mut Tape, cfg: &JointConfig, hidden: NodeId, mut source: ZSource) -> Result<Selection> {
    let k = tape.shape(hidden)[0];
    if let ZSource::Fixed(z) = source {
        if z.len() != k {
            return Err(Error::ShapeMismatch {
                op: "select",
                detail: alloc::format!("{} selections for {k} words", z.len()),
            });
        }
    }
    let w_h = tape.param("gen.z.w_h")?;
    let b = tape.param(Z_BIAS)?;
    let scores = tape.matmul(hidden, w_h)?;
    let recurrent = if cfg.independent_selection {
        None
    } else {
        let rec_h = tape.param("gen.z.rec_h")?;
        let proj = tape.matmul(hidden, rec_h)?;
        Some((
            proj,
            tape.param("gen.z.w_s")?,
            tape.param("gen.z.rec_z")?,
            tape.param("gen.z.rec_s")?,
            tape.param("gen.z.rec_b")?,
        ))
    };
    let mut state = recurrent.map(|_| tape.constant(Tensor::zeros(&[1, cfg.z_hidden])));

    let mut z = Vec::with_capacity(k);
    let mut probs = Vec::with_capacity(k);
    let mut logits = Vec::with_capacity(k);
    for t in 0..k {
        let mut logit = tape.row(scores, t)?;
        if let (Some((_, w_s, ..)), Some(s)) = (recurrent, state) {
            let from_state = tape.matmul(s, w_s)?;
            logit = tape.add(logit, from_state)?;
        }
        let logit = tape.add(logit, b)?;
        let p = math::sigmoid(tape.value(logit).item());
        let zt = match &mut source {
            ZSource::Sample(r) => r.gen::<f64>() < p,
            ZSource::Fixed(given) => given[t],
            ZSource::Threshold => p >= 0.5,
        };
        if let (Some((proj, _, rec_z, rec_s, rec_b)), Some(s)) = (recurrent, state) {
            let mut pre = tape.row(proj, t)?;
            if zt {
                pre = tape.add(pre, rec_z)?;
            }
            let carry = tape.matmul(s, rec_s)?;
            pre = tape.add(pre, carry)?;
            pre = tape.add(pre, rec_b)?;
            state = Some(tape.tanh(pre)?);
        }
        z.push(zt);
        probs.push(p);
        logits.push(logit);
    }
    let logits = tape.concat(&logits, 0)?;
    let log_prob = tape.bernoulli_log_prob(logits, z.clone())?;
    Ok(Selection { z, probs, logits, log_prob })
}
