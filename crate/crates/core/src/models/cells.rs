//! Recurrent cells over row vectors (`1 × d`).
//!
//! RCNN cell of order `n` with hidden size `d`:
//!
//! ```text
//! λ_t     = σ(W_λ x_t + U_λ c_{t−1}^(n) + b_λ)
//! c_t^(1) = λ_t ⊙ c_{t−1}^(1) + (1 − λ_t) ⊙ (W_1 x_t)
//! c_t^(l) = λ_t ⊙ c_{t−1}^(l) + (1 − λ_t) ⊙ (c_{t−1}^(l−1) + W_l x_t),  l = 2..n
//! h_t     = tanh(c_t^(n) + b)
//! ```
//!
//! LSTM cell: sigmoid input/forget/output gates and a tanh candidate.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{NodeId, ParamStore, Tape};
use crate::error::Result;
use crate::tensor::Tensor;

use super::init::{glorot, zeros};

/// Parameter nodes of one RCNN cell.
#[derive(Debug, Clone)]
pub struct RcnnNodes {
    pub w_gate: NodeId,
    pub u_gate: NodeId,
    pub b_gate: NodeId,
    /// `W_1..W_n`.
    pub w: Vec<NodeId>,
    pub bias: NodeId,
}

pub fn rcnn_param_names(prefix: &str, order: usize) -> Vec<String> {
    let mut names = alloc::vec![format!("{prefix}.w_gate"), format!("{prefix}.u_gate"), format!("{prefix}.b_gate")];
    names.extend((1..=order).map(|l| format!("{prefix}.w{l}")));
    names.push(format!("{prefix}.bias"));
    names
}

pub fn init_rcnn(params: &mut ParamStore, prefix: &str, d_in: usize, hidden: usize, order: usize, rng: &mut impl Rng) {
    params.insert(format!("{prefix}.w_gate"), glorot(rng, d_in, hidden));
    params.insert(format!("{prefix}.u_gate"), glorot(rng, hidden, hidden));
    params.insert(format!("{prefix}.b_gate"), zeros(1, hidden));
    for l in 1..=order {
        params.insert(format!("{prefix}.w{l}"), glorot(rng, d_in, hidden));
    }
    params.insert(format!("{prefix}.bias"), zeros(1, hidden));
}

impl RcnnNodes {
    pub fn bind(tape: &mut Tape, prefix: &str, order: usize) -> Result<Self> {
        Ok(RcnnNodes {
            w_gate: tape.param(&format!("{prefix}.w_gate"))?,
            u_gate: tape.param(&format!("{prefix}.u_gate"))?,
            b_gate: tape.param(&format!("{prefix}.b_gate"))?,
            w: (1..=order).map(|l| tape.param(&format!("{prefix}.w{l}"))).collect::<Result<_>>()?,
            bias: tape.param(&format!("{prefix}.bias"))?,
        })
    }

    pub fn order(&self) -> usize {
        self.w.len()
    }

    pub fn hidden(&self, tape: &Tape) -> usize {
        tape.shape(self.bias)[1]
    }

    /// All-zero initial state `c^(1..n)`.
    pub fn zero_state(&self, tape: &mut Tape) -> Vec<NodeId> {
        let d = self.hidden(tape);
        (0..self.order()).map(|_| tape.constant(Tensor::zeros(&[1, d]))).collect()
    }

    /// One step from a raw input row `x_t`.
    pub fn step(&self, tape: &mut Tape, state: &[NodeId], x_t: NodeId) -> Result<(Vec<NodeId>, NodeId)> {
        let gate_x = tape.matmul(x_t, self.w_gate)?;
        let layer_x = self.w.iter().map(|&w| tape.matmul(x_t, w)).collect::<Result<Vec<_>>>()?;
        self.step_projected(tape, state, gate_x, &layer_x)
    }

    /// One step given the input projections `x_t W_λ` and `x_t W_l`.
    pub fn step_projected(
        &self,
        tape: &mut Tape,
        state: &[NodeId],
        gate_x: NodeId,
        layer_x: &[NodeId],
    ) -> Result<(Vec<NodeId>, NodeId)> {
        let n = self.order();
        let recur = tape.matmul(state[n - 1], self.u_gate)?;
        let pre = tape.add(gate_x, recur)?;
        let pre = tape.add(pre, self.b_gate)?;
        let lambda = tape.sigmoid(pre)?;
        let keep = tape.one_minus(lambda)?;

        let mut next = Vec::with_capacity(n);
        for l in 0..n {
            let candidate = if l == 0 { layer_x[0] } else { tape.add(state[l - 1], layer_x[l])? };
            let carried = tape.mul(lambda, state[l])?;
            let fresh = tape.mul(keep, candidate)?;
            next.push(tape.add(carried, fresh)?);
        }
        let out = tape.add(next[n - 1], self.bias)?;
        let h = tape.tanh(out)?;
        Ok((next, h))
    }
}

/// Parameter nodes of one LSTM cell, gates ordered input, forget, output, candidate.
#[derive(Debug, Clone)]
pub struct LstmNodes {
    pub w: [NodeId; 4],
    pub u: [NodeId; 4],
    pub b: [NodeId; 4],
}

const GATES: [&str; 4] = ["i", "f", "o", "g"];

pub fn lstm_param_names(prefix: &str) -> Vec<String> {
    GATES
        .iter()
        .flat_map(|g| [format!("{prefix}.w_{g}"), format!("{prefix}.u_{g}"), format!("{prefix}.b_{g}")])
        .collect()
}

pub fn init_lstm(params: &mut ParamStore, prefix: &str, d_in: usize, hidden: usize, rng: &mut impl Rng) {
    for g in GATES {
        params.insert(format!("{prefix}.w_{g}"), glorot(rng, d_in, hidden));
        params.insert(format!("{prefix}.u_{g}"), glorot(rng, hidden, hidden));
        let b = if g == "f" { Tensor::ones(&[1, hidden]) } else { zeros(1, hidden) };
        params.insert(format!("{prefix}.b_{g}"), b);
    }
}

impl LstmNodes {
    pub fn bind(tape: &mut Tape, prefix: &str) -> Result<Self> {
        let mut ids = [[NodeId(0); 4]; 3];
        for (k, g) in GATES.iter().enumerate() {
            ids[0][k] = tape.param(&format!("{prefix}.w_{g}"))?;
            ids[1][k] = tape.param(&format!("{prefix}.u_{g}"))?;
            ids[2][k] = tape.param(&format!("{prefix}.b_{g}"))?;
        }
        Ok(LstmNodes { w: ids[0], u: ids[1], b: ids[2] })
    }

    pub fn hidden(&self, tape: &Tape) -> usize {
        tape.shape(self.b[0])[1]
    }

    /// All-zero `(h, c)`.
    pub fn zero_state(&self, tape: &mut Tape) -> Vec<NodeId> {
        let d = self.hidden(tape);
        (0..2).map(|_| tape.constant(Tensor::zeros(&[1, d]))).collect()
    }

    pub fn step(&self, tape: &mut Tape, state: &[NodeId], x_t: NodeId) -> Result<(Vec<NodeId>, NodeId)> {
        let mut proj = [NodeId(0); 4];
        for k in 0..4 {
            proj[k] = tape.matmul(x_t, self.w[k])?;
        }
        self.step_projected(tape, state, &proj)
    }

    /// `state` is `[h, c]`; `proj[k] = x_t W_k`.
    pub fn step_projected(&self, tape: &mut Tape, state: &[NodeId], proj: &[NodeId]) -> Result<(Vec<NodeId>, NodeId)> {
        let (h_prev, c_prev) = (state[0], state[1]);
        let mut act = [NodeId(0); 4];
        for k in 0..4 {
            let r = tape.matmul(h_prev, self.u[k])?;
            let pre = tape.add(proj[k], r)?;
            let pre = tape.add(pre, self.b[k])?;
            act[k] = if k == 3 { tape.tanh(pre)? } else { tape.sigmoid(pre)? };
        }
        let [i, f, o, g] = act;
        let kept = tape.mul(f, c_prev)?;
        let written = tape.mul(i, g)?;
        let c = tape.add(kept, written)?;
        let tc = tape.tanh(c)?;
        let h = tape.mul(o, tc)?;
        Ok((alloc::vec![h, c], h))
    }
}
