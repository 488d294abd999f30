//! Dynamic tape for reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied during a forward pass as a
//! node holding the operation, its input node ids, and the forward value.
//! Nodes are appended in execution order, so the tape index order is a
//! topological order; [`Graph::backward`] walks it once in reverse,
//! accumulating gradients into each node that requires them.
//!
//! The graph is single-threaded by construction. Parameters enter as leaf
//! nodes (copied in), so several graphs over the same read-only parameters
//! can be built and run independently.

use super::{cosine_value, Tensor, COSINE_NORM_EPS};
use crate::error::{Error, Result};

/// Handle to a node in one specific [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// Elementwise sum of two same-shape tensors.
    Add(NodeId, NodeId),
    /// Matrix [m,n] plus a row vector [n] broadcast over rows.
    AddRow(NodeId, NodeId),
    /// Elementwise plus a constant; the constant is not saved because the
    /// backward rule does not need it.
    AddScalar(NodeId),
    /// Elementwise plus a *scalar node* broadcast everywhere.
    AddBScalar(NodeId, NodeId),
    /// Elementwise product of two same-shape tensors.
    Mul(NodeId, NodeId),
    /// Multiplication by a constant.
    Scale(NodeId, f64),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    /// Concatenation along the last axis; all inputs share the other dims.
    ConcatLast(Vec<NodeId>),
    /// Row `i` of a matrix, as a vector.
    SliceRow(NodeId, usize),
    /// Element `i` of a vector, as a scalar.
    SliceIndex(NodeId, usize),
    /// Columns `[start, start+width)` of a matrix.
    SliceCols(NodeId, usize, usize),
    Reshape(NodeId),
    /// Gather rows of a table by index; repeated ids accumulate gradient.
    Embedding(NodeId, Vec<usize>),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    },
    Relu(NodeId),
    /// Softmax along `axis`, computed with max-subtraction.
    Softmax(NodeId, usize),
    Log(NodeId),
    Exp(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    /// Cosine similarity of two vectors, with a zero-norm guard.
    Cosine(NodeId, NodeId),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// The tape. Create one per forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last backward's loss w.r.t. this node, if the node
    /// requires grad. After [`Graph::backward`], every requires-grad leaf
    /// has a buffer (zeros when the loss does not reach it).
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            grad: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn any_requires(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Enters a tensor into the graph. Gradients flow into it iff the
    /// tensor was marked with `requires_grad`.
    pub fn leaf(&mut self, mut t: Tensor) -> NodeId {
        t.clear_grad();
        let rg = t.requires_grad();
        self.push(Op::Leaf, t, rg)
    }

    /// Leaf that never receives gradient (masks, targets, constants).
    pub fn constant(&mut self, mut t: Tensor) -> NodeId {
        t.clear_grad();
        self.push(Op::Leaf, t, false)
    }

    // ───────────────────────── forward ops ─────────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(Op::Add(a, b), out, rg))
    }

    /// `[m,n] + [n]`, the row vector added to every row.
    pub fn add_row(&mut self, a: NodeId, v: NodeId) -> Result<NodeId> {
        let (ta, tv) = (self.value(a), self.value(v));
        if ta.ndim() != 2 || tv.ndim() != 1 || ta.shape()[1] != tv.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: ta.shape().to_vec(),
                rhs: tv.shape().to_vec(),
            });
        }
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                data.push(ta.data()[i * n + j] + tv.data()[j]);
            }
        }
        let out = Tensor::new(vec![m, n], data)?;
        let rg = self.any_requires(&[a, v]);
        Ok(self.push(Op::AddRow(a, v), out, rg))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x + c).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.any_requires(&[a]);
        self.push(Op::AddScalar(a), out, rg)
    }

    /// Adds a scalar *node* to every element of `a`.
    pub fn add_bscalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let c = self.value(s).item()?;
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x + c).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.any_requires(&[a, s]);
        Ok(self.push(Op::AddBScalar(a, s), out, rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(Op::Mul(a, b), out, rg))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x * c).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.any_requires(&[a]);
        self.push(Op::Scale(a, c), out, rg)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.ndim() != 2 || tb.ndim() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for kk in 0..k {
                let aik = ta.data()[i * k + kk];
                if aik == 0.0 {
                    continue;
                }
                let brow = &tb.data()[kk * n..(kk + 1) * n];
                let crow = &mut data[i * n..(i + 1) * n];
                for j in 0..n {
                    crow[j] += aik * brow[j];
                }
            }
        }
        let out = Tensor::new(vec![m, n], data)?;
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), out, rg))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = self.value(a);
        if ta.ndim() != 2 {
            return Err(Error::Dimension(format!(
                "transpose needs a matrix, got shape {:?}",
                ta.shape()
            )));
        }
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = ta.data()[i * n + j];
            }
        }
        let out = Tensor::new(vec![n, m], data)?;
        let rg = self.any_requires(&[a]);
        Ok(self.push(Op::Transpose(a), out, rg))
    }

    /// Concatenates along the last axis. Accepts all-1-D inputs or all-2-D
    /// inputs with the same row count.
    pub fn concat_last(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        if ids.is_empty() {
            return Err(Error::Dimension("concat of zero tensors".into()));
        }
        let ndim = self.value(ids[0]).ndim();
        if !(ndim == 1 || ndim == 2) {
            return Err(Error::Dimension(format!(
                "concat supports vectors and matrices, got ndim {ndim}"
            )));
        }
        for &id in ids {
            let t = self.value(id);
            if t.ndim() != ndim {
                return Err(Error::ShapeMismatch {
                    op: "concat_last",
                    lhs: self.value(ids[0]).shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        let out = if ndim == 1 {
            let mut data = Vec::new();
            for &id in ids {
                data.extend_from_slice(self.value(id).data());
            }
            Tensor::vector(data)
        } else {
            let rows = self.value(ids[0]).shape()[0];
            for &id in ids {
                if self.value(id).shape()[0] != rows {
                    return Err(Error::ShapeMismatch {
                        op: "concat_last",
                        lhs: self.value(ids[0]).shape().to_vec(),
                        rhs: self.value(id).shape().to_vec(),
                    });
                }
            }
            let total: usize = ids.iter().map(|&id| self.value(id).shape()[1]).sum();
            let mut data = Vec::with_capacity(rows * total);
            for i in 0..rows {
                for &id in ids {
                    let t = self.value(id);
                    let n = t.shape()[1];
                    data.extend_from_slice(&t.data()[i * n..(i + 1) * n]);
                }
            }
            Tensor::new(vec![rows, total], data)?
        };
        let rg = self.any_requires(ids);
        Ok(self.push(Op::ConcatLast(ids.to_vec()), out, rg))
    }

    pub fn slice_row(&mut self, a: NodeId, row: usize) -> Result<NodeId> {
        let ta = self.value(a);
        if ta.ndim() != 2 {
            return Err(Error::Dimension(format!(
                "slice_row needs a matrix, got shape {:?}",
                ta.shape()
            )));
        }
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        if row >= m {
            return Err(Error::Contract(format!(
                "slice_row index {row} out of range for {m} rows"
            )));
        }
        let out = Tensor::vector(ta.data()[row * n..(row + 1) * n].to_vec());
        let rg = self.any_requires(&[a]);
        Ok(self.push(Op::SliceRow(a, row), out, rg))
    }

    pub fn slice_index(&mut self, a: NodeId, idx: usize) -> Result<NodeId> {
        let ta = self.value(a);
        if ta.ndim() != 1 {
            return Err(Error::Dimension(format!(
                "slice_index needs a vector, got shape {:?}",
                ta.shape()
            )));
        }
        if idx >= ta.shape()[0] {
            return Err(Error::Contract(format!(
                "index {idx} out of range for length {}",
                ta.shape()[0]
            )));
        }
        let out = Tensor::scalar(ta.data()[idx]);
        let rg = self.any_requires(&[a]);
        Ok(self.push(Op::SliceIndex(a, idx), out, rg))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, width: usize) -> Result<NodeId> {
        let ta = self.value(a);
        if ta.ndim() != 2 {
            return Err(Error::Dimension(format!(
                "slice_cols needs a matrix, got shape {:?}",
                ta.shape()
            )));
        }
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        if width == 0 || start + width > n {
            return Err(Error::Contract(format!(
                "column slice [{start}, {}) out of range for {n} columns",
                start + width
            )));
        }
        let mut data = Vec::with_capacity(m * width);
        for i in 0..m {
            data.extend_from_slice(&ta.data()[i * n + start..i * n + start + width]);
        }
        let out = Tensor::new(vec![m, width], data)?;
        let rg = self.any_requires(&[a]);
        Ok(self.push(Op::SliceCols(a, start, width), out, rg))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let ta = self.value(a);
        let numel: usize = shape.iter().product();
        if numel != ta.numel() || shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                ta.shape()
            )));
        }
        let out = Tensor::new(shape, ta.data().to_vec())?;
        let rg = self.any_requires(&[a]);
        Ok(self.push(Op::Reshape(a), out, rg))
    }

    /// Gathers rows `ids` of a `[rows, d]` table into a `[len(ids), d]`
    /// output.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let tt = self.value(table);
        if tt.ndim() != 2 {
            return Err(Error::Dimension(format!(
                "embedding table must be a matrix, got shape {:?}",
                tt.shape()
            )));
        }
        if ids.is_empty() {
            return Err(Error::Dimension("embedding lookup of zero ids".into()));
        }
        let (rows, d) = (tt.shape()[0], tt.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(Error::Contract(format!(
                    "embedding id {id} out of range for table with {rows} rows"
                )));
            }
            data.extend_from_slice(&tt.data()[id * d..(id + 1) * d]);
        }
        let out = Tensor::new(vec![ids.len(), d], data)?;
        let rg = self.any_requires(&[table]);
        Ok(self.push(Op::Embedding(table, ids.to_vec()), out, rg))
    }

    /// Layer normalization over the last axis with learnable gain/bias.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        const EPS: f64 = 1e-5;
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let n = *tx.shape().last().expect("non-empty shape");
        if tg.shape() != [n] || tb.shape() != [n] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: tx.shape().to_vec(),
                rhs: tg.shape().to_vec(),
            });
        }
        let lanes = tx.numel() / n;
        let mut data = vec![0.0; tx.numel()];
        for l in 0..lanes {
            let xs = &tx.data()[l * n..(l + 1) * n];
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + EPS).sqrt();
            for j in 0..n {
                let xhat = (xs[j] - mean) * inv;
                data[l * n + j] = tg.data()[j] * xhat + tb.data()[j];
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.any_requires(&[x, gamma, beta]);
        Ok(self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                eps: EPS,
            },
            out,
            rg,
        ))
    }

    /// ReLU; the subgradient at exactly zero is zero.
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| x.max(0.0)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.any_requires(&[a]);
        self.push(Op::Relu(a), out, rg)
    }

    /// Softmax along `axis`, max-subtracted for stability.
    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let ta = self.value(a);
        if axis >= ta.ndim() {
            return Err(Error::Dimension(format!(
                "softmax axis {axis} out of range for shape {:?}",
                ta.shape()
            )));
        }
        let out = softmax_forward(ta, axis);
        let rg = self.any_requires(&[a]);
        Ok(self.push(Op::Softmax(a, axis), out, rg))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x.ln()).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.any_requires(&[a]);
        self.push(Op::Log(a), out, rg)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x.exp()).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.any_requires(&[a]);
        self.push(Op::Exp(a), out, rg)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total = self.value(a).data().iter().sum();
        let rg = self.any_requires(&[a]);
        self.push(Op::Sum(a), Tensor::scalar(total), rg)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let total: f64 = ta.data().iter().sum();
        let m = total / ta.numel() as f64;
        let rg = self.any_requires(&[a]);
        self.push(Op::Mean(a), Tensor::scalar(m), rg)
    }

    /// Cosine similarity of two equal-length vectors as a scalar node.
    /// Degenerate norms yield 0 with zero gradient.
    pub fn cosine(&mut self, u: NodeId, v: NodeId) -> Result<NodeId> {
        let (tu, tv) = (self.value(u), self.value(v));
        if tu.ndim() != 1 || tv.ndim() != 1 || tu.shape() != tv.shape() {
            return Err(Error::ShapeMismatch {
                op: "cosine",
                lhs: tu.shape().to_vec(),
                rhs: tv.shape().to_vec(),
            });
        }
        let c = cosine_value(tu.data(), tv.data());
        let rg = self.any_requires(&[u, v]);
        Ok(self.push(Op::Cosine(u, v), Tensor::scalar(c), rg))
    }

    // ─────────────────────── composite helpers ───────────────────────

    /// Scaled dot-product attention for one head:
    /// `softmax(q·kᵀ/√d + bias)·v`, composed from primitives. Returns the
    /// output and the attention-probability node.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        bias: Option<NodeId>,
    ) -> Result<(NodeId, NodeId)> {
        let d = *self
            .value(q)
            .shape()
            .last()
            .ok_or_else(|| Error::Dimension("attention on empty shape".into()))?;
        let kt = self.transpose(k)?;
        let mut scores = self.matmul(q, kt)?;
        scores = self.scale(scores, 1.0 / (d as f64).sqrt());
        if let Some(b) = bias {
            scores = self.add(scores, b)?;
        }
        let probs = self.softmax(scores, 1)?;
        let out = self.matmul(probs, v)?;
        Ok((out, probs))
    }

    /// Numerically stable log-softmax of a vector, built from primitives.
    /// The max is subtracted as a constant, which leaves gradients intact.
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = self.value(a);
        if ta.ndim() != 1 {
            return Err(Error::Dimension(format!(
                "log_softmax needs a vector, got shape {:?}",
                ta.shape()
            )));
        }
        let max = ta.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shifted = self.add_scalar(a, -max);
        let exps = self.exp(shifted);
        let total = self.sum(exps);
        let log_total = self.log(total);
        let neg = self.scale(log_total, -1.0);
        self.add_bscalar(shifted, neg)
    }

    // ───────────────────────── backward ─────────────────────────

    /// Reverse pass from a scalar loss. Gradients are accumulated into
    /// every node on the path; every requires-grad leaf ends up with a
    /// buffer, zero-filled when the loss does not reach it.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        for node in &mut self.nodes {
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                node.grad = Some(vec![0.0; node.value.numel()]);
            }
        }
        let seed = self.nodes[loss.0]
            .grad
            .get_or_insert_with(|| vec![0.0; 1]);
        seed[0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let contributions = {
                let node = &self.nodes[i];
                match &node.grad {
                    Some(gout) if gout.iter().any(|&g| g != 0.0) => {
                        self.grad_contributions(&node.op, &node.value, gout)
                    }
                    _ => continue,
                }
            };
            for (target, contrib) in contributions {
                if !self.nodes[target.0].requires_grad {
                    continue;
                }
                let numel = self.nodes[target.0].value.numel();
                let buf = self.nodes[target.0]
                    .grad
                    .get_or_insert_with(|| vec![0.0; numel]);
                for (dst, src) in buf.iter_mut().zip(contrib) {
                    *dst += src;
                }
            }
        }
        Ok(())
    }

    /// Gradient contributions of one node to each of its inputs.
    fn grad_contributions(
        &self,
        op: &Op,
        value: &Tensor,
        gout: &[f64],
    ) -> Vec<(NodeId, Vec<f64>)> {
        match op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, gout.to_vec()), (*b, gout.to_vec())],
            Op::AddRow(a, v) => {
                let n = self.value(*v).numel();
                let mut dv = vec![0.0; n];
                for (idx, g) in gout.iter().enumerate() {
                    dv[idx % n] += g;
                }
                vec![(*a, gout.to_vec()), (*v, dv)]
            }
            Op::AddScalar(a) => vec![(*a, gout.to_vec())],
            Op::AddBScalar(a, s) => {
                vec![(*a, gout.to_vec()), (*s, vec![gout.iter().sum()])]
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da = gout.iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                let db = gout.iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                vec![(*a, da), (*b, db)]
            }
            Op::Scale(a, c) => vec![(*a, gout.iter().map(|g| g * c).collect())],
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                let mut da = vec![0.0; m * k];
                let mut db = vec![0.0; k * n];
                // dA = dC·Bᵀ
                for i in 0..m {
                    for kk in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += gout[i * n + j] * tb.data()[kk * n + j];
                        }
                        da[i * k + kk] = acc;
                    }
                }
                // dB = Aᵀ·dC
                for kk in 0..k {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for i in 0..m {
                            acc += ta.data()[i * k + kk] * gout[i * n + j];
                        }
                        db[kk * n + j] = acc;
                    }
                }
                vec![(*a, da), (*b, db)]
            }
            Op::Transpose(a) => {
                let ta = self.value(*a);
                let (m, n) = (ta.shape()[0], ta.shape()[1]);
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] = gout[j * m + i];
                    }
                }
                vec![(*a, da)]
            }
            Op::ConcatLast(ids) => {
                if self.value(ids[0]).ndim() == 1 {
                    let mut out = Vec::with_capacity(ids.len());
                    let mut offset = 0;
                    for &id in ids {
                        let len = self.value(id).numel();
                        out.push((id, gout[offset..offset + len].to_vec()));
                        offset += len;
                    }
                    out
                } else {
                    let rows = self.value(ids[0]).shape()[0];
                    let total: usize = ids.iter().map(|&id| self.value(id).shape()[1]).sum();
                    let mut out: Vec<(NodeId, Vec<f64>)> = ids
                        .iter()
                        .map(|&id| (id, vec![0.0; self.value(id).numel()]))
                        .collect();
                    for i in 0..rows {
                        let mut offset = 0;
                        for (slot, &id) in out.iter_mut().zip(ids) {
                            let n = self.value(id).shape()[1];
                            slot.1[i * n..(i + 1) * n]
                                .copy_from_slice(&gout[i * total + offset..i * total + offset + n]);
                            offset += n;
                        }
                    }
                    out
                }
            }
            Op::SliceRow(a, row) => {
                let ta = self.value(*a);
                let n = ta.shape()[1];
                let mut da = vec![0.0; ta.numel()];
                da[row * n..(row + 1) * n].copy_from_slice(gout);
                vec![(*a, da)]
            }
            Op::SliceIndex(a, idx) => {
                let mut da = vec![0.0; self.value(*a).numel()];
                da[*idx] = gout[0];
                vec![(*a, da)]
            }
            Op::SliceCols(a, start, width) => {
                let ta = self.value(*a);
                let (m, n) = (ta.shape()[0], ta.shape()[1]);
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    da[i * n + start..i * n + start + width]
                        .copy_from_slice(&gout[i * width..(i + 1) * width]);
                }
                vec![(*a, da)]
            }
            Op::Reshape(a) => vec![(*a, gout.to_vec())],
            Op::Embedding(table, ids) => {
                let tt = self.value(*table);
                let d = tt.shape()[1];
                let mut dt = vec![0.0; tt.numel()];
                for (pos, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[id * d + j] += gout[pos * d + j];
                    }
                }
                vec![(*table, dt)]
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let (tx, tg) = (self.value(*x), self.value(*gamma));
                let n = *tx.shape().last().expect("non-empty");
                let lanes = tx.numel() / n;
                let mut dx = vec![0.0; tx.numel()];
                let mut dgamma = vec![0.0; n];
                let mut dbeta = vec![0.0; n];
                for l in 0..lanes {
                    let xs = &tx.data()[l * n..(l + 1) * n];
                    let gs = &gout[l * n..(l + 1) * n];
                    let mean = xs.iter().sum::<f64>() / n as f64;
                    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = xs.iter().map(|v| (v - mean) * inv).collect();
                    let dxhat: Vec<f64> =
                        gs.iter().zip(tg.data()).map(|(g, gm)| g * gm).collect();
                    let mean_dxhat = dxhat.iter().sum::<f64>() / n as f64;
                    let mean_dxhat_xhat = dxhat
                        .iter()
                        .zip(&xhat)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        / n as f64;
                    for j in 0..n {
                        dgamma[j] += gs[j] * xhat[j];
                        dbeta[j] += gs[j];
                        dx[l * n + j] =
                            inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                    }
                }
                vec![(*x, dx), (*gamma, dgamma), (*beta, dbeta)]
            }
            Op::Relu(a) => {
                let ta = self.value(*a);
                let da = gout
                    .iter()
                    .zip(ta.data())
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                vec![(*a, da)]
            }
            Op::Softmax(a, axis) => {
                let ta = self.value(*a);
                let shape = ta.shape();
                let axis_len = shape[*axis];
                let inner: usize = shape[axis + 1..].iter().product();
                let outer: usize = shape[..*axis].iter().product();
                let p = value.data();
                let mut da = vec![0.0; ta.numel()];
                for o in 0..outer {
                    for j in 0..inner {
                        let at = |i: usize| (o * axis_len + i) * inner + j;
                        let mut dot = 0.0;
                        for i in 0..axis_len {
                            dot += gout[at(i)] * p[at(i)];
                        }
                        for i in 0..axis_len {
                            da[at(i)] = p[at(i)] * (gout[at(i)] - dot);
                        }
                    }
                }
                vec![(*a, da)]
            }
            Op::Log(a) => {
                let ta = self.value(*a);
                let da = gout.iter().zip(ta.data()).map(|(g, x)| g / x).collect();
                vec![(*a, da)]
            }
            Op::Exp(a) => {
                let da = gout.iter().zip(value.data()).map(|(g, y)| g * y).collect();
                vec![(*a, da)]
            }
            Op::Sum(a) => {
                let g = gout[0];
                vec![(*a, vec![g; self.value(*a).numel()])]
            }
            Op::Mean(a) => {
                let n = self.value(*a).numel();
                let g = gout[0] / n as f64;
                vec![(*a, vec![g; n])]
            }
            Op::Cosine(u, v) => {
                let (tu, tv) = (self.value(*u), self.value(*v));
                let (us, vs) = (tu.data(), tv.data());
                let nu = us.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nv = vs.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nu < COSINE_NORM_EPS || nv < COSINE_NORM_EPS {
                    // guarded output is the constant 0
                    return vec![(*u, vec![0.0; us.len()]), (*v, vec![0.0; vs.len()])];
                }
                let c = value.data()[0];
                let g = gout[0];
                let du = us
                    .iter()
                    .zip(vs)
                    .map(|(x, y)| g * (y / (nu * nv) - c * x / (nu * nu)))
                    .collect();
                let dv = vs
                    .iter()
                    .zip(us)
                    .map(|(y, x)| g * (x / (nu * nv) - c * y / (nv * nv)))
                    .collect();
                vec![(*u, du), (*v, dv)]
            }
        }
    }
}

pub(crate) fn softmax_forward(t: &Tensor, axis: usize) -> Tensor {
    let shape = t.shape();
    let axis_len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut data = vec![0.0; t.numel()];
    for o in 0..outer {
        for j in 0..inner {
            let at = |i: usize| (o * axis_len + i) * inner + j;
            let mut max = f64::NEG_INFINITY;
            for i in 0..axis_len {
                max = max.max(t.data()[at(i)]);
            }
            let mut total = 0.0;
            for i in 0..axis_len {
                let e = (t.data()[at(i)] - max).exp();
                data[at(i)] = e;
                total += e;
            }
            for i in 0..axis_len {
                data[at(i)] /= total;
            }
        }
    }
    Tensor::new(shape.to_vec(), data).expect("same shape")
}
