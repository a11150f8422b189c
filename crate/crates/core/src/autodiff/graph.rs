use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeafKind {
    /// Learnable; receives a gradient.
    Param,
    /// Data fed at evaluation time; no gradient.
    Input,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Leaf { name: String, kind: LeafKind },
    Const(Tensor),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Elementwise `scale * x + shift`.
    Affine { input: NodeId, scale: f64, shift: f64 },
    Sigmoid(NodeId),
    Tanh(NodeId),
    /// Row-wise softmax.
    Softmax(NodeId),
    Concat { inputs: Vec<NodeId>, axis: usize },
    Slice { input: NodeId, axis: usize, start: usize, len: usize },
    Sum(NodeId),
    Mean(NodeId),
    SquaredL2(NodeId),
    /// Row `i` of the output is the mean of the `table` rows listed in `bags[i]`.
    EmbeddingBag { table: NodeId, bags: Vec<Vec<usize>> },
    /// `Σ_t z_t ln σ(l_t) + (1 − z_t) ln(1 − σ(l_t))` over the logits.
    BernoulliLogProb { logits: NodeId, targets: Vec<bool> },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::Const(_) => "const",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine { .. } => "affine",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Softmax(_) => "softmax",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SquaredL2(_) => "squared_l2",
            Op::EmbeddingBag { .. } => "embedding_bag",
            Op::BernoulliLogProb { .. } => "bernoulli_log_prob",
        }
    }

    pub fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf { .. } | Op::Const(_) => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Affine { input, .. } | Op::Slice { input, .. } => vec![*input],
            Op::Sigmoid(a) | Op::Tanh(a) | Op::Softmax(a) | Op::Sum(a) | Op::Mean(a) | Op::SquaredL2(a) => {
                vec![*a]
            }
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::EmbeddingBag { table, .. } => vec![*table],
            Op::BernoulliLogProb { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub op: Op,
    pub shape: Vec<usize>,
}

/// Topologically ordered record of operations. Every node's inputs precede it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComputeGraph {
    pub(crate) nodes: Vec<Node>,
    pub(crate) leaves: BTreeMap<String, NodeId>,
    pub(crate) outputs: BTreeMap<String, NodeId>,
}

impl ComputeGraph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Names of learnable leaves, in name order.
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.leaves
            .iter()
            .filter(|(_, id)| matches!(self.nodes[id.0].op, Op::Leaf { kind: LeafKind::Param, .. }))
            .map(|(n, _)| n.as_str())
    }

    pub fn leaf(&self, name: &str) -> Option<NodeId> {
        self.leaves.get(name).copied()
    }

    pub fn outputs(&self) -> &BTreeMap<String, NodeId> {
        &self.outputs
    }
}

pub(crate) fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        _ => (shape[0], shape[1..].iter().product()),
    }
}

fn mismatch(op: &'static str, detail: String) -> Error {
    Error::ShapeMismatch { op, detail }
}

/// Output shape of `op` given the shapes of all existing nodes.
pub(crate) fn infer_shape(op: &Op, nodes: &[Node]) -> Result<Vec<usize>> {
    let shape = |id: &NodeId| -> Result<&[usize]> {
        nodes
            .get(id.0)
            .map(|n| n.shape.as_slice())
            .ok_or_else(|| mismatch(op.name(), format!("input node {} does not precede this node", id.0)))
    };
    match op {
        Op::Leaf { .. } => unreachable!("leaf shapes come from bindings"),
        Op::Const(t) => Ok(t.shape().to_vec()),
        Op::MatMul(a, b) => {
            let (sa, sb) = (shape(a)?, shape(b)?);
            let (m, k) = rows_cols(sa);
            let (k2, n) = rows_cols(sb);
            if k != k2 {
                return Err(mismatch("matmul", format!("{sa:?} x {sb:?}")));
            }
            Ok(vec![m, n])
        }
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
            let (sa, sb) = (shape(a)?, shape(b)?);
            if sa != sb {
                return Err(mismatch(op.name(), format!("{sa:?} vs {sb:?}")));
            }
            Ok(sa.to_vec())
        }
        Op::Affine { input, .. } | Op::Sigmoid(input) | Op::Tanh(input) | Op::Softmax(input) => {
            Ok(shape(input)?.to_vec())
        }
        Op::Concat { inputs, axis } => {
            if inputs.is_empty() {
                return Err(mismatch("concat", "no inputs".into()));
            }
            if *axis > 1 {
                return Err(mismatch("concat", format!("axis {axis} unsupported")));
            }
            let (r0, c0) = rows_cols(shape(&inputs[0])?);
            let mut total = 0;
            for id in inputs {
                let (r, c) = rows_cols(shape(id)?);
                if (*axis == 0 && c != c0) || (*axis == 1 && r != r0) {
                    return Err(mismatch("concat", format!("incompatible parts along axis {axis}")));
                }
                total += if *axis == 0 { r } else { c };
            }
            Ok(if *axis == 0 { vec![total, c0] } else { vec![r0, total] })
        }
        Op::Slice { input, axis, start, len } => {
            let (r, c) = rows_cols(shape(input)?);
            let extent = match axis {
                0 => r,
                1 => c,
                _ => return Err(mismatch("slice", format!("axis {axis} unsupported"))),
            };
            if *len == 0 || start + len > extent {
                return Err(mismatch("slice", format!("range {start}..{} of {extent}", start + len)));
            }
            Ok(if *axis == 0 { vec![*len, c] } else { vec![r, *len] })
        }
        Op::Sum(a) | Op::Mean(a) | Op::SquaredL2(a) => {
            shape(a)?;
            Ok(vec![1])
        }
        Op::EmbeddingBag { table, bags } => {
            let (rows, d) = rows_cols(shape(table)?);
            if bags.is_empty() {
                return Err(mismatch("embedding_bag", "no bags".into()));
            }
            for bag in bags {
                if bag.is_empty() || bag.iter().any(|&i| i >= rows) {
                    return Err(mismatch("embedding_bag", format!("bag {bag:?} invalid for {rows} rows")));
                }
            }
            Ok(vec![bags.len(), d])
        }
        Op::BernoulliLogProb { logits, targets } => {
            let n: usize = shape(logits)?.iter().product();
            if n != targets.len() {
                return Err(mismatch("bernoulli_log_prob", format!("{n} logits, {} targets", targets.len())));
            }
            Ok(vec![1])
        }
    }
}
