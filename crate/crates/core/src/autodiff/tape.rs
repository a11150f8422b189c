use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::graph::{infer_shape, rows_cols, ComputeGraph, LeafKind, Node, NodeId, Op};
use super::params::{Bindings, Gradients};
use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{matmul_at_into, matmul_bt_into, matmul_into, Tensor};

enum Slot<'a> {
    Owned(Tensor),
    Bound(&'a Tensor),
    Const,
}

/// A computation graph under construction, evaluated eagerly.
///
/// Every operation is appended to the underlying [`ComputeGraph`] and its value
/// is computed immediately, so intermediate results can steer how the rest of
/// the graph is built (the rationale sampler relies on this). A finished graph
/// can be re-evaluated against other bindings with [`Tape::replay`].
pub struct Tape<'a> {
    graph: ComputeGraph,
    slots: Vec<Slot<'a>>,
    requires_grad: Vec<bool>,
    bindings: &'a dyn Bindings,
}

impl<'a> Tape<'a> {
    pub fn new(bindings: &'a dyn Bindings) -> Self {
        Tape { graph: ComputeGraph::default(), slots: Vec::new(), requires_grad: Vec::new(), bindings }
    }

    /// Evaluates every node of `graph` against `bindings`.
    pub fn replay(graph: &ComputeGraph, bindings: &'a dyn Bindings) -> Result<Self> {
        let mut tape = Tape::new(bindings);
        for node in &graph.nodes {
            match &node.op {
                Op::Leaf { name, kind } => {
                    let id = tape.leaf(name, kind.clone())?;
                    if tape.graph.nodes[id.0].shape != node.shape {
                        return Err(Error::ShapeMismatch {
                            op: "leaf",
                            detail: format!(
                                "`{name}` declared {:?}, bound {:?}",
                                node.shape,
                                tape.graph.nodes[id.0].shape
                            ),
                        });
                    }
                }
                Op::Const(t) => {
                    tape.constant(t.clone());
                }
                op => {
                    tape.push(op.clone())?;
                }
            }
        }
        tape.graph.outputs = graph.outputs.clone();
        Ok(tape)
    }

    pub fn graph(&self) -> &ComputeGraph {
        &self.graph
    }

    pub fn into_graph(self) -> ComputeGraph {
        self.graph
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.graph.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match &self.slots[id.0] {
            Slot::Owned(t) => t,
            Slot::Bound(t) => t,
            Slot::Const => match &self.graph.nodes[id.0].op {
                Op::Const(t) => t,
                _ => unreachable!("const slot on non-const node"),
            },
        }
    }

    pub fn mark_output(&mut self, id: NodeId, name: impl Into<String>) {
        self.graph.outputs.insert(name.into(), id);
    }

    /// Learnable leaf bound by name; repeated calls return the same node.
    pub fn param(&mut self, name: &str) -> Result<NodeId> {
        self.leaf(name, LeafKind::Param)
    }

    /// Non-learnable leaf bound by name.
    pub fn input(&mut self, name: &str) -> Result<NodeId> {
        self.leaf(name, LeafKind::Input)
    }

    fn leaf(&mut self, name: &str, kind: LeafKind) -> Result<NodeId> {
        if let Some(&id) = self.graph.leaves.get(name) {
            return Ok(id);
        }
        let value = self.bindings.lookup(name).ok_or_else(|| Error::Unbound(name.to_string()))?;
        let id = NodeId(self.graph.nodes.len());
        self.graph.nodes.push(Node { op: Op::Leaf { name: name.to_string(), kind }, shape: value.shape().to_vec() });
        self.slots.push(Slot::Bound(value));
        self.requires_grad.push(kind_is_param(&self.graph.nodes[id.0].op));
        self.graph.leaves.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let id = NodeId(self.graph.nodes.len());
        let shape = value.shape().to_vec();
        self.graph.nodes.push(Node { op: Op::Const(value), shape });
        self.slots.push(Slot::Const);
        self.requires_grad.push(false);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }

    pub fn affine(&mut self, input: NodeId, scale: f64, shift: f64) -> Result<NodeId> {
        self.push(Op::Affine { input, scale, shift })
    }

    pub fn scale(&mut self, input: NodeId, factor: f64) -> Result<NodeId> {
        self.affine(input, factor, 0.0)
    }

    /// `1 − x`.
    pub fn one_minus(&mut self, input: NodeId) -> Result<NodeId> {
        self.affine(input, -1.0, 1.0)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Tanh(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Softmax(a))
    }

    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        if inputs.len() == 1 {
            return Ok(inputs[0]);
        }
        self.push(Op::Concat { inputs: inputs.to_vec(), axis })
    }

    pub fn slice(&mut self, input: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        self.push(Op::Slice { input, axis, start, len })
    }

    /// Row `r` of a matrix as a `1 × cols` node.
    pub fn row(&mut self, input: NodeId, r: usize) -> Result<NodeId> {
        self.slice(input, 0, r, 1)
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Mean(a))
    }

    pub fn squared_l2(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::SquaredL2(a))
    }

    pub fn embedding_bag(&mut self, table: NodeId, bags: Vec<Vec<usize>>) -> Result<NodeId> {
        self.push(Op::EmbeddingBag { table, bags })
    }

    pub fn bernoulli_log_prob(&mut self, logits: NodeId, targets: Vec<bool>) -> Result<NodeId> {
        self.push(Op::BernoulliLogProb { logits, targets })
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let shape = infer_shape(&op, &self.graph.nodes)?;
        let id = self.graph.nodes.len();
        let value = self.compute(&op, &shape)?;
        if !value.is_finite() {
            return Err(Error::NonFinite { node: id, op: op.name() });
        }
        let requires_grad = op.inputs().iter().any(|i| self.requires_grad[i.0]);
        self.graph.nodes.push(Node { op, shape });
        self.slots.push(Slot::Owned(value));
        self.requires_grad.push(requires_grad);
        Ok(NodeId(id))
    }

    fn compute(&self, op: &Op, shape: &[usize]) -> Result<Tensor> {
        let v = |id: &NodeId| self.value(*id).data();
        let n: usize = shape.iter().product();
        let data = match op {
            Op::Leaf { .. } | Op::Const(_) => unreachable!("leaves are not computed"),
            Op::MatMul(a, b) => {
                let (m, k) = rows_cols(self.shape(*a));
                let cols = shape[1];
                let mut out = vec![0.0; m * cols];
                matmul_into(v(a), v(b), &mut out, m, k, cols);
                out
            }
            Op::Add(a, b) => v(a).iter().zip(v(b)).map(|(x, y)| x + y).collect(),
            Op::Sub(a, b) => v(a).iter().zip(v(b)).map(|(x, y)| x - y).collect(),
            Op::Mul(a, b) => v(a).iter().zip(v(b)).map(|(x, y)| x * y).collect(),
            Op::Affine { input, scale, shift } => v(input).iter().map(|x| scale * x + shift).collect(),
            Op::Sigmoid(a) => v(a).iter().map(|&x| math::sigmoid(x)).collect(),
            Op::Tanh(a) => v(a).iter().map(|&x| math::tanh(x)).collect(),
            Op::Softmax(a) => {
                let (r, c) = rows_cols(shape);
                let x = v(a);
                let mut out = vec![0.0; n];
                for i in 0..r {
                    let row = &x[i * c..(i + 1) * c];
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for j in 0..c {
                        let e = math::exp(row[j] - max);
                        out[i * c + j] = e;
                        total += e;
                    }
                    out[i * c..(i + 1) * c].iter_mut().for_each(|e| *e /= total);
                }
                out
            }
            Op::Concat { inputs, axis } => {
                if *axis == 0 {
                    inputs.iter().flat_map(|id| v(id).iter().copied()).collect()
                } else {
                    let rows = shape[0];
                    let mut out = Vec::with_capacity(n);
                    for r in 0..rows {
                        for id in inputs {
                            let c = rows_cols(self.shape(*id)).1;
                            out.extend_from_slice(&v(id)[r * c..(r + 1) * c]);
                        }
                    }
                    out
                }
            }
            Op::Slice { input, axis, start, len } => {
                let (r, c) = rows_cols(self.shape(*input));
                let x = v(input);
                if *axis == 0 {
                    x[start * c..(start + len) * c].to_vec()
                } else {
                    (0..r).flat_map(|i| x[i * c + start..i * c + start + len].iter().copied()).collect()
                }
            }
            Op::Sum(a) => vec![v(a).iter().sum()],
            Op::Mean(a) => {
                let x = v(a);
                vec![x.iter().sum::<f64>() / x.len() as f64]
            }
            Op::SquaredL2(a) => vec![v(a).iter().map(|x| x * x).sum()],
            Op::EmbeddingBag { table, bags } => {
                let d = rows_cols(self.shape(*table)).1;
                let t = v(table);
                let mut out = vec![0.0; n];
                for (i, bag) in bags.iter().enumerate() {
                    let row = &mut out[i * d..(i + 1) * d];
                    for &b in bag {
                        for (o, x) in row.iter_mut().zip(&t[b * d..(b + 1) * d]) {
                            *o += x;
                        }
                    }
                    let inv = 1.0 / bag.len() as f64;
                    row.iter_mut().for_each(|o| *o *= inv);
                }
                out
            }
            Op::BernoulliLogProb { logits, targets } => {
                let lp = v(logits)
                    .iter()
                    .zip(targets)
                    .map(|(&l, &z)| if z { math::log_sigmoid(l) } else { math::log_sigmoid(-l) })
                    .sum();
                vec![lp]
            }
        };
        Tensor::new(shape.to_vec(), data)
    }

    /// Gradients of the scalar `loss` for every learnable leaf in the graph.
    /// Leaves the loss does not depend on get zero tensors.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let mut grads = Gradients::new();
        for name in self.graph.param_names() {
            let id = self.graph.leaves[name];
            grads.entry(name, &self.graph.nodes[id.0].shape)?;
        }
        self.backward_into(loss, &mut grads, 1.0)?;
        Ok(grads)
    }

    /// Adds `seed · ∂loss/∂θ` into `grads` for every learnable leaf θ reached.
    pub fn backward_into(&self, loss: NodeId, grads: &mut Gradients, seed: f64) -> Result<()> {
        let loss_shape = self.shape(loss);
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss { shape: loss_shape.to_vec() });
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![seed]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.graph.nodes[i];
            match &node.op {
                Op::Leaf { name, kind: LeafKind::Param } => {
                    let acc = grads.entry(name, &node.shape)?;
                    for (a, d) in acc.data_mut().iter_mut().zip(&g) {
                        *a += d;
                    }
                }
                Op::Leaf { .. } | Op::Const(_) => {}
                Op::MatMul(a, b) => {
                    let (m, k) = rows_cols(self.shape(*a));
                    let n = node.shape[1];
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    if self.needs_grad(*a) {
                        let ga = slot(&mut adj, *a, m * k);
                        matmul_bt_into(&g, vb, ga, m, n, k);
                    }
                    if self.needs_grad(*b) {
                        let gb = slot(&mut adj, *b, k * n);
                        matmul_at_into(va, &g, gb, m, k, n);
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    if self.needs_grad(*a) {
                        add_scaled(slot(&mut adj, *a, g.len()), &g, 1.0);
                    }
                    if self.needs_grad(*b) {
                        add_scaled(slot(&mut adj, *b, g.len()), &g, sign);
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    if self.needs_grad(*a) {
                        let ga = slot(&mut adj, *a, g.len());
                        for ((o, d), y) in ga.iter_mut().zip(&g).zip(vb) {
                            *o += d * y;
                        }
                    }
                    if self.needs_grad(*b) {
                        let gb = slot(&mut adj, *b, g.len());
                        for ((o, d), x) in gb.iter_mut().zip(&g).zip(va) {
                            *o += d * x;
                        }
                    }
                }
                Op::Affine { input, scale, .. } => {
                    if self.needs_grad(*input) {
                        add_scaled(slot(&mut adj, *input, g.len()), &g, *scale);
                    }
                }
                Op::Sigmoid(a) | Op::Tanh(a) => {
                    if self.needs_grad(*a) {
                        let y = self.value(NodeId(i)).data();
                        let tanh = matches!(node.op, Op::Tanh(_));
                        let ga = slot(&mut adj, *a, g.len());
                        for ((o, d), &y) in ga.iter_mut().zip(&g).zip(y) {
                            *o += d * if tanh { 1.0 - y * y } else { y * (1.0 - y) };
                        }
                    }
                }
                Op::Softmax(a) => {
                    if self.needs_grad(*a) {
                        let (r, c) = rows_cols(&node.shape);
                        let y = self.value(NodeId(i)).data();
                        let ga = slot(&mut adj, *a, g.len());
                        for row in 0..r {
                            let ys = &y[row * c..(row + 1) * c];
                            let gs = &g[row * c..(row + 1) * c];
                            let dot: f64 = ys.iter().zip(gs).map(|(y, d)| y * d).sum();
                            for j in 0..c {
                                ga[row * c + j] += ys[j] * (gs[j] - dot);
                            }
                        }
                    }
                }
                Op::Concat { inputs, axis } => {
                    let total_cols = node.shape[1];
                    let mut offset = 0;
                    for id in inputs {
                        let (r, c) = rows_cols(self.shape(*id));
                        if self.needs_grad(*id) {
                            let gi = slot(&mut adj, *id, r * c);
                            if *axis == 0 {
                                add_scaled(gi, &g[offset * c..(offset + r) * c], 1.0);
                            } else {
                                for row in 0..r {
                                    let src = &g[row * total_cols + offset..row * total_cols + offset + c];
                                    add_scaled(&mut gi[row * c..(row + 1) * c], src, 1.0);
                                }
                            }
                        }
                        offset += if *axis == 0 { r } else { c };
                    }
                }
                Op::Slice { input, axis, start, len } => {
                    if self.needs_grad(*input) {
                        let (r, c) = rows_cols(self.shape(*input));
                        let gi = slot(&mut adj, *input, r * c);
                        if *axis == 0 {
                            add_scaled(&mut gi[start * c..(start + len) * c], &g, 1.0);
                        } else {
                            for row in 0..r {
                                add_scaled(
                                    &mut gi[row * c + start..row * c + start + len],
                                    &g[row * len..(row + 1) * len],
                                    1.0,
                                );
                            }
                        }
                    }
                }
                Op::Sum(a) | Op::Mean(a) => {
                    if self.needs_grad(*a) {
                        let n: usize = self.shape(*a).iter().product();
                        let d = if matches!(node.op, Op::Mean(_)) { g[0] / n as f64 } else { g[0] };
                        slot(&mut adj, *a, n).iter_mut().for_each(|o| *o += d);
                    }
                }
                Op::SquaredL2(a) => {
                    if self.needs_grad(*a) {
                        let x = self.value(*a).data();
                        let ga = slot(&mut adj, *a, x.len());
                        for (o, x) in ga.iter_mut().zip(x) {
                            *o += 2.0 * x * g[0];
                        }
                    }
                }
                Op::EmbeddingBag { table, bags } => {
                    if self.needs_grad(*table) {
                        let table_node = &self.graph.nodes[table.0];
                        let d = rows_cols(&table_node.shape).1;
                        // Scatter straight into the parameter accumulator so a
                        // large table never gets a dense per-graph adjoint.
                        let target: &mut [f64] = match &table_node.op {
                            Op::Leaf { name, kind: LeafKind::Param } => {
                                grads.entry(name, &table_node.shape)?.data_mut()
                            }
                            _ => slot(&mut adj, *table, table_node.shape.iter().product()),
                        };
                        for (row, bag) in bags.iter().enumerate() {
                            let scale = 1.0 / bag.len() as f64;
                            let src = &g[row * d..(row + 1) * d];
                            for &b in bag {
                                add_scaled(&mut target[b * d..(b + 1) * d], src, scale);
                            }
                        }
                    }
                }
                Op::BernoulliLogProb { logits, targets } => {
                    if self.needs_grad(*logits) {
                        let l = self.value(*logits).data();
                        let gl = slot(&mut adj, *logits, l.len());
                        for ((o, &x), &z) in gl.iter_mut().zip(l).zip(targets) {
                            let target = if z { 1.0 } else { 0.0 };
                            *o += g[0] * (target - math::sigmoid(x));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether gradient can flow into `id` (it is, or depends on, a learnable leaf).
    fn needs_grad(&self, id: NodeId) -> bool {
        self.requires_grad[id.0]
    }
}

fn kind_is_param(op: &Op) -> bool {
    matches!(op, Op::Leaf { kind: LeafKind::Param, .. })
}

fn slot(adj: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut [f64] {
    adj[id.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_scaled(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

/// Evaluates `graph` and returns the values of its named outputs.
pub fn forward_eval(graph: &ComputeGraph, bindings: &dyn Bindings) -> Result<BTreeMap<String, Tensor>> {
    let tape = Tape::replay(graph, bindings)?;
    Ok(graph.outputs.iter().map(|(name, id)| (name.clone(), tape.value(*id).clone())).collect())
}

/// Evaluates `graph` and differentiates the scalar node `loss` with respect to
/// every learnable leaf.
pub fn backward_grads(graph: &ComputeGraph, loss: NodeId, bindings: &dyn Bindings) -> Result<Gradients> {
    if loss.0 >= graph.nodes.len() {
        return Err(Error::InvalidArgument(format!("loss node {} not in graph", loss.0)));
    }
    Tape::replay(graph, bindings)?.backward(loss)
}
