use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cells::{init_lstm, init_rcnn, LstmNodes, RcnnNodes};
use crate::autodiff::{NodeId, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CellKind {
    Rcnn { order: usize },
    Lstm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub cell: CellKind,
    pub hidden: usize,
    pub layers: usize,
    pub bidirectional: bool,
}

impl EncoderConfig {
    /// Bidirectional two-layer RCNN, hidden size 300, order 2.
    pub fn paper() -> Self {
        EncoderConfig { cell: CellKind::Rcnn { order: 2 }, hidden: 300, layers: 2, bidirectional: true }
    }

    /// The paper architecture at laptop scale (hidden size 32).
    pub fn desk() -> Self {
        EncoderConfig { hidden: 32, ..Self::paper() }
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// Width `H` of each output position.
    pub fn output_dim(&self) -> usize {
        self.hidden * self.directions()
    }

    pub fn validate(&self) -> Result<()> {
        let order_ok = match self.cell {
            CellKind::Rcnn { order } => order >= 1,
            CellKind::Lstm => true,
        };
        if self.hidden == 0 || self.layers == 0 || !order_ok {
            return Err(Error::InvalidArgument(format!("invalid encoder config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Last forward state, joined with the first backward state when bidirectional.
    #[default]
    Final,
    Mean,
}

fn layer_prefix(prefix: &str, layer: usize, backward: bool) -> alloc::string::String {
    format!("{prefix}.l{layer}.{}", if backward { "bwd" } else { "fwd" })
}

pub fn init_encoder(params: &mut ParamStore, prefix: &str, cfg: &EncoderConfig, d_in: usize, rng: &mut impl Rng) {
    for layer in 0..cfg.layers {
        let input = if layer == 0 { d_in } else { cfg.output_dim() };
        for dir in 0..cfg.directions() {
            let p = layer_prefix(prefix, layer, dir == 1);
            match cfg.cell {
                CellKind::Rcnn { order } => init_rcnn(params, &p, input, cfg.hidden, order, rng),
                CellKind::Lstm => init_lstm(params, &p, input, cfg.hidden, rng),
            }
        }
    }
}

/// Learnable parameters of the encoder stack (embeddings and heads excluded).
///
/// Per layer and direction, with `i` the layer input width and `d` the hidden size:
/// RCNN of order `n` has `n·i·d` (W_1..W_n) + `i·d + d·d + d` (gate) + `d` (output
/// bias); LSTM has `4·(i·d + d·d + d)`. Layers after the first take `i = H`.
pub fn param_count(cfg: &EncoderConfig, d_in: usize) -> usize {
    let d = cfg.hidden;
    (0..cfg.layers)
        .map(|layer| {
            let i = if layer == 0 { d_in } else { cfg.output_dim() };
            let per_direction = match cfg.cell {
                CellKind::Rcnn { order } => order * i * d + (i * d + d * d + d) + d,
                CellKind::Lstm => 4 * (i * d + d * d + d),
            };
            per_direction * cfg.directions()
        })
        .sum()
}

/// Output of [`encode`].
#[derive(Debug, Clone)]
pub struct Encoded {
    /// `K × H` hidden states of the last layer.
    pub outputs: NodeId,
    /// Last-layer forward states by position.
    pub forward: Vec<NodeId>,
    /// Last-layer backward states by position (empty when unidirectional).
    pub backward: Vec<NodeId>,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// `1 × H` summary of the sequence.
    pub fn pooled(&self, tape: &mut Tape, pooling: Pooling) -> Result<NodeId> {
        match pooling {
            Pooling::Final => {
                let last = *self.forward.last().expect("non-empty");
                if self.backward.is_empty() {
                    Ok(last)
                } else {
                    tape.concat(&[last, self.backward[0]], 1)
                }
            }
            Pooling::Mean => {
                let k = self.len();
                let w = tape.constant(Tensor::full(&[1, k], 1.0 / k as f64));
                tape.matmul(w, self.outputs)
            }
        }
    }
}

enum CellNodes {
    Rcnn(RcnnNodes),
    Lstm(LstmNodes),
}

/// Runs the layered (optionally bidirectional) encoder over the `K × d_in` node `x`.
pub fn encode(tape: &mut Tape, prefix: &str, cfg: &EncoderConfig, x: NodeId) -> Result<Encoded> {
    let k = tape.shape(x)[0];
    if k == 0 {
        return Err(Error::EmptySequence);
    }
    let mut input = x;
    let mut result = None;
    for layer in 0..cfg.layers {
        let mut per_direction = Vec::with_capacity(2);
        for dir in 0..cfg.directions() {
            let backward = dir == 1;
            let p = layer_prefix(prefix, layer, backward);
            let cell = match cfg.cell {
                CellKind::Rcnn { order } => CellNodes::Rcnn(RcnnNodes::bind(tape, &p, order)?),
                CellKind::Lstm => CellNodes::Lstm(LstmNodes::bind(tape, &p)?),
            };
            per_direction.push(run_direction(tape, &cell, input, k, backward)?);
        }
        let stacked: Vec<NodeId> = per_direction
            .iter()
            .map(|states| tape.concat(states, 0))
            .collect::<Result<_>>()?;
        let outputs = tape.concat(&stacked, 1)?;
        input = outputs;
        let mut dirs = per_direction.into_iter();
        let forward = dirs.next().expect("forward direction");
        let backward = dirs.next().unwrap_or_default();
        result = Some(Encoded { outputs, forward, backward });
    }
    Ok(result.expect("at least one layer"))
}

/// Hidden states by position for one direction.
fn run_direction(tape: &mut Tape, cell: &CellNodes, input: NodeId, k: usize, backward: bool) -> Result<Vec<NodeId>> {
    let mut states: Vec<Option<NodeId>> = alloc::vec![None; k];
    let order: Vec<usize> = if backward { (0..k).rev().collect() } else { (0..k).collect() };
    match cell {
        CellNodes::Rcnn(c) => {
            let gate_proj = tape.matmul(input, c.w_gate)?;
            let layer_proj = c.w.iter().map(|&w| tape.matmul(input, w)).collect::<Result<Vec<_>>>()?;
            let mut state = c.zero_state(tape);
            for &t in &order {
                let gx = tape.row(gate_proj, t)?;
                let lx = layer_proj.iter().map(|&p| tape.row(p, t)).collect::<Result<Vec<_>>>()?;
                let (next, h) = c.step_projected(tape, &state, gx, &lx)?;
                state = next;
                states[t] = Some(h);
            }
        }
        CellNodes::Lstm(c) => {
            let proj = c.w.iter().map(|&w| tape.matmul(input, w)).collect::<Result<Vec<_>>>()?;
            let mut state = c.zero_state(tape);
            for &t in &order {
                let px = proj.iter().map(|&p| tape.row(p, t)).collect::<Result<Vec<_>>>()?;
                let (next, h) = c.step_projected(tape, &state, &px)?;
                state = next;
                states[t] = Some(h);
            }
        }
    }
    Ok(states.into_iter().map(|s| s.expect("every position visited")).collect())
}
