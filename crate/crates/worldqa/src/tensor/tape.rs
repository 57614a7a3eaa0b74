//! The computation tape. Forward ops append nodes in topological order;
//! `backward` visits them in exact reverse order, so two backward runs on
//! identical tapes produce bit-identical gradients.

use super::fastmath::{fast_exp, fast_tanh};
use super::kernels::{matmul_nn, matmul_nt, matmul_tn};
use super::Tensor;
use crate::error::{Error, Result};

const GELU_C: f32 = 0.797_884_56; // sqrt(2/pi)
const GELU_A: f32 = 0.044_715;
const MASK_NEG: f32 = -1.0e9;

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: usize, b: usize },
    Transpose { a: usize },
    Add { a: usize, b: usize, broadcast: bool },
    Mul { a: usize, b: usize },
    Scale { a: usize, c: f32 },
    Concat { parts: Vec<usize>, axis: usize },
    Slice { a: usize, axis: usize, start: usize },
    Reshape { a: usize },
    Softmax { a: usize },
    LayerNorm { a: usize, gamma: usize, beta: usize, eps: f32 },
    Gelu { a: usize },
    Embedding { table: usize, ids: Vec<u32> },
    CrossEntropy { logits: usize, targets: Vec<u32> },
    Sum { a: usize },
}

struct Node {
    t: Tensor,
    op: Op,
}

/// Records primitive operations for one forward pass. Single-writer; drop
/// the tape (or build a fresh one) per forward.
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), backward_done: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].t
    }

    /// Gradient buffer of a node, if backward has populated one.
    pub fn grad(&self, id: NodeId) -> Option<&[f32]> {
        self.nodes[id.0].t.grad.as_deref()
    }

    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf)
    }

    /// Leaf that participates in differentiation.
    pub fn param(&mut self, t: Tensor) -> NodeId {
        self.push(t.with_grad(), Op::Leaf)
    }

    fn push(&mut self, t: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { t, op });
        NodeId(self.nodes.len() - 1)
    }

    fn requires(&self, id: usize) -> bool {
        self.nodes[id].t.requires_grad
    }

    /// Record `out` produced from `inputs` by `op`. The op is only kept when
    /// some input requires grad; otherwise the node is a dead end for backward.
    fn record(&mut self, name: &'static str, mut out: Tensor, inputs: &[usize], op: Op) -> Result<NodeId> {
        if !out.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let needs = inputs.iter().any(|&i| self.requires(i));
        out.requires_grad = needs;
        Ok(self.push(out, if needs { op } else { Op::Leaf }))
    }

    // ── forward primitives ───────────────────────────────────────────

    /// 2D matrix product `[m,k] @ [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].t, &self.nodes[b.0].t);
        if ta.shape.len() != 2 || tb.shape.len() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!("{:?} @ {:?}", ta.shape, tb.shape),
            });
        }
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let mut data = vec![0.0f32; m * n];
        matmul_nn(&ta.data, &tb.data, m, k, n, &mut data);
        let out = Tensor { shape: vec![m, n], data, requires_grad: false, grad: None };
        self.record("matmul", out, &[a.0, b.0], Op::Matmul { a: a.0, b: b.0 })
    }

    /// 2D transpose.
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = &self.nodes[a.0].t;
        if ta.shape.len() != 2 {
            return Err(Error::ShapeMismatch { op: "transpose", detail: format!("{:?}", ta.shape) });
        }
        let (m, n) = (ta.shape[0], ta.shape[1]);
        let mut data = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = ta.data[i * n + j];
            }
        }
        let out = Tensor { shape: vec![n, m], data, requires_grad: false, grad: None };
        self.record("transpose", out, &[a.0], Op::Transpose { a: a.0 })
    }

    /// Elementwise add. `b` may also be a suffix shape of `a` (leading-dim
    /// expansion), e.g. bias `[n]` added to `[m,n]`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].t, &self.nodes[b.0].t);
        let broadcast = ta.shape != tb.shape;
        if broadcast && !suffix_of(&tb.shape, &ta.shape) {
            return Err(Error::ShapeMismatch {
                op: "add",
                detail: format!("{:?} + {:?}", ta.shape, tb.shape),
            });
        }
        let bn = tb.data.len();
        let data: Vec<f32> =
            ta.data.iter().enumerate().map(|(i, &v)| v + tb.data[i % bn]).collect();
        let out = Tensor { shape: ta.shape.clone(), data, requires_grad: false, grad: None };
        self.record("add", out, &[a.0, b.0], Op::Add { a: a.0, b: b.0, broadcast })
    }

    /// Elementwise product of same-shape tensors.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].t, &self.nodes[b.0].t);
        if ta.shape != tb.shape {
            return Err(Error::ShapeMismatch {
                op: "mul",
                detail: format!("{:?} * {:?}", ta.shape, tb.shape),
            });
        }
        let data: Vec<f32> = ta.data.iter().zip(&tb.data).map(|(&x, &y)| x * y).collect();
        let out = Tensor { shape: ta.shape.clone(), data, requires_grad: false, grad: None };
        self.record("mul", out, &[a.0, b.0], Op::Mul { a: a.0, b: b.0 })
    }

    pub fn scale(&mut self, a: NodeId, c: f32) -> Result<NodeId> {
        let ta = &self.nodes[a.0].t;
        let data: Vec<f32> = ta.data.iter().map(|&x| x * c).collect();
        let out = Tensor { shape: ta.shape.clone(), data, requires_grad: false, grad: None };
        self.record("scale", out, &[a.0], Op::Scale { a: a.0, c })
    }

    /// Concatenate 1D or 2D tensors along `axis`.
    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        }
        let first = &self.nodes[parts[0].0].t.shape;
        let ndim = first.len();
        if axis >= ndim {
            return Err(Error::ShapeMismatch { op: "concat", detail: format!("axis {axis} for {ndim}d") });
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for p in parts {
            let s = &self.nodes[p.0].t.shape;
            if s.len() != ndim || (0..ndim).any(|d| d != axis && s[d] != first[d]) {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    detail: format!("{:?} vs {:?}", s, first),
                });
            }
            out_shape[axis] += s[axis];
        }
        let data = match (ndim, axis) {
            (1, 0) | (2, 0) => {
                let mut d = Vec::with_capacity(out_shape.iter().product());
                for p in parts {
                    d.extend_from_slice(&self.nodes[p.0].t.data);
                }
                d
            }
            (2, 1) => {
                let rows = out_shape[0];
                let total_cols = out_shape[1];
                let mut d = vec![0.0f32; rows * total_cols];
                let mut col = 0;
                for p in parts {
                    let t = &self.nodes[p.0].t;
                    let c = t.shape[1];
                    for r in 0..rows {
                        d[r * total_cols + col..r * total_cols + col + c]
                            .copy_from_slice(&t.data[r * c..(r + 1) * c]);
                    }
                    col += c;
                }
                d
            }
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    detail: format!("unsupported ndim {ndim} axis {axis}"),
                })
            }
        };
        let inputs: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let out = Tensor { shape: out_shape, data, requires_grad: false, grad: None };
        self.record("concat", out, &inputs.clone(), Op::Concat { parts: inputs, axis })
    }

    /// Contiguous slice of `len` indices starting at `start` along `axis`
    /// (1D or 2D input).
    pub fn slice(&mut self, a: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let ta = &self.nodes[a.0].t;
        let ndim = ta.shape.len();
        if axis >= ndim || start + len > ta.shape[axis] {
            return Err(Error::ShapeMismatch {
                op: "slice",
                detail: format!("axis {axis} [{start}..{}] of {:?}", start + len, ta.shape),
            });
        }
        let mut out_shape = ta.shape.clone();
        out_shape[axis] = len;
        let data = match (ndim, axis) {
            (1, 0) => ta.data[start..start + len].to_vec(),
            (2, 0) => {
                let cols = ta.shape[1];
                ta.data[start * cols..(start + len) * cols].to_vec()
            }
            (2, 1) => {
                let cols = ta.shape[1];
                let rows = ta.shape[0];
                let mut d = Vec::with_capacity(rows * len);
                for r in 0..rows {
                    d.extend_from_slice(&ta.data[r * cols + start..r * cols + start + len]);
                }
                d
            }
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "slice",
                    detail: format!("unsupported ndim {ndim} axis {axis}"),
                })
            }
        };
        let out = Tensor { shape: out_shape, data, requires_grad: false, grad: None };
        self.record("slice", out, &[a.0], Op::Slice { a: a.0, axis, start })
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let ta = &self.nodes[a.0].t;
        let numel: usize = shape.iter().product();
        if numel != ta.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {:?}", ta.shape, shape),
            });
        }
        let out =
            Tensor { shape: shape.to_vec(), data: ta.data.clone(), requires_grad: false, grad: None };
        self.record("reshape", out, &[a.0], Op::Reshape { a: a.0 })
    }

    /// Row-wise softmax over the last dimension (max-subtracted for
    /// stability). 1D input is treated as a single row.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = &self.nodes[a.0].t;
        let cols = *ta.shape.last().ok_or(Error::ShapeMismatch {
            op: "softmax",
            detail: "0d input".into(),
        })?;
        let rows = ta.data.len() / cols;
        let mut data = vec![0.0f32; ta.data.len()];
        for r in 0..rows {
            let row = &ta.data[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let out_row = &mut data[r * cols..(r + 1) * cols];
            let mut sum = 0.0f32;
            for (o, &x) in out_row.iter_mut().zip(row) {
                *o = fast_exp(x - max);
                sum += *o;
            }
            for o in out_row.iter_mut() {
                *o /= sum;
            }
        }
        let out = Tensor { shape: ta.shape.clone(), data, requires_grad: false, grad: None };
        self.record("softmax", out, &[a.0], Op::Softmax { a: a.0 })
    }

    /// Row-wise layer normalization with learned gain/bias over the last dim.
    pub fn layer_norm(&mut self, a: NodeId, gamma: NodeId, beta: NodeId, eps: f32) -> Result<NodeId> {
        let (ta, tg, tb) = (&self.nodes[a.0].t, &self.nodes[gamma.0].t, &self.nodes[beta.0].t);
        let cols = *ta.shape.last().unwrap_or(&0);
        if cols == 0 || tg.data.len() != cols || tb.data.len() != cols {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                detail: format!("x {:?}, gamma {:?}, beta {:?}", ta.shape, tg.shape, tb.shape),
            });
        }
        let rows = ta.data.len() / cols;
        let mut data = vec![0.0f32; ta.data.len()];
        for r in 0..rows {
            let row = &ta.data[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f32>() / cols as f32;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f32>() / cols as f32;
            let inv = 1.0 / (var + eps).sqrt();
            let out_row = &mut data[r * cols..(r + 1) * cols];
            for j in 0..cols {
                out_row[j] = (row[j] - mean) * inv * tg.data[j] + tb.data[j];
            }
        }
        let out = Tensor { shape: ta.shape.clone(), data, requires_grad: false, grad: None };
        self.record(
            "layer_norm",
            out,
            &[a.0, gamma.0, beta.0],
            Op::LayerNorm { a: a.0, gamma: gamma.0, beta: beta.0, eps },
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = &self.nodes[a.0].t;
        let data: Vec<f32> = ta
            .data
            .iter()
            .map(|&x| {
                let u = GELU_C * (x + GELU_A * x * x * x);
                0.5 * x * (1.0 + fast_tanh(u))
            })
            .collect();
        let out = Tensor { shape: ta.shape.clone(), data, requires_grad: false, grad: None };
        self.record("gelu", out, &[a.0], Op::Gelu { a: a.0 })
    }

    /// Gather rows of `table` by token id: `[len(ids), d]`.
    pub fn embedding_lookup(&mut self, table: NodeId, ids: &[u32]) -> Result<NodeId> {
        let tt = &self.nodes[table.0].t;
        if tt.shape.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "embedding_lookup",
                detail: format!("table {:?}", tt.shape),
            });
        }
        let (v, d) = (tt.shape[0], tt.shape[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            let id = id as usize;
            if id >= v {
                return Err(Error::ShapeMismatch {
                    op: "embedding_lookup",
                    detail: format!("id {id} out of {v}"),
                });
            }
            data.extend_from_slice(&tt.data[id * d..(id + 1) * d]);
        }
        let out = Tensor { shape: vec![ids.len(), d], data, requires_grad: false, grad: None };
        self.record(
            "embedding_lookup",
            out,
            &[table.0],
            Op::Embedding { table: table.0, ids: ids.to_vec() },
        )
    }

    /// Mean token-level cross-entropy between `logits` rows `[m, v]` and the
    /// `m` target ids, computed via log-sum-exp. Returns a scalar node.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[u32]) -> Result<NodeId> {
        let tl = &self.nodes[logits.0].t;
        if tl.shape.len() != 2 || tl.shape[0] != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                detail: format!("logits {:?}, {} targets", tl.shape, targets.len()),
            });
        }
        let (m, v) = (tl.shape[0], tl.shape[1]);
        let mut loss = 0.0f32;
        for (r, &t) in targets.iter().enumerate() {
            let t = t as usize;
            if t >= v {
                return Err(Error::ShapeMismatch {
                    op: "cross_entropy",
                    detail: format!("target {t} out of {v}"),
                });
            }
            let row = &tl.data[r * v..(r + 1) * v];
            let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let lse = max + row.iter().map(|&x| fast_exp(x - max)).sum::<f32>().ln();
            loss += lse - row[t];
        }
        let out = Tensor::scalar(loss / m as f32);
        self.record(
            "cross_entropy",
            out,
            &[logits.0],
            Op::CrossEntropy { logits: logits.0, targets: targets.to_vec() },
        )
    }

    /// Sum of all elements -> scalar node.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = &self.nodes[a.0].t;
        let out = Tensor::scalar(ta.data.iter().sum());
        self.record("sum", out, &[a.0], Op::Sum { a: a.0 })
    }

    /// Additive attention mask as a constant: `allowed[i*len+j]` selects which
    /// keys position `i` may attend to; disallowed entries get a large
    /// negative value so softmax zeroes them.
    pub fn attention_mask(&mut self, allowed: &[bool], rows: usize, cols: usize) -> NodeId {
        debug_assert_eq!(allowed.len(), rows * cols);
        let data: Vec<f32> = allowed.iter().map(|&a| if a { 0.0 } else { MASK_NEG }).collect();
        self.leaf(Tensor { shape: vec![rows, cols], data, requires_grad: false, grad: None })
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Populates `grad` on every node that
    /// requires grad (leaves included). Errs if called twice on one tape or
    /// if `loss` is not scalar.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.backward_done {
            return Err(Error::TapeReuse);
        }
        if self.nodes.is_empty() {
            return Err(Error::InvalidArgument("backward on empty tape".into()));
        }
        if self.nodes[loss.0].t.numel() != 1 {
            return Err(Error::LossNotScalar(self.nodes[loss.0].t.shape.clone()));
        }
        self.backward_done = true;

        for node in self.nodes.iter_mut() {
            if node.t.requires_grad {
                node.t.grad = Some(vec![0.0f32; node.t.data.len()]);
            }
        }
        if let Some(g) = self.nodes[loss.0].t.grad.as_mut() {
            g[0] = 1.0;
        } else {
            // Loss does not depend on any differentiable input; nothing to do.
            return Ok(());
        }

        for idx in (0..=loss.0).rev() {
            if self.nodes[idx].t.grad.is_none() {
                continue;
            }
            let op = self.nodes[idx].op.clone();
            let up = match self.nodes[idx].t.grad.clone() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_one(idx, &op, &up);
        }
        Ok(())
    }

    fn add_grad(&mut self, node: usize, contrib: &[f32]) {
        if let Some(g) = self.nodes[node].t.grad.as_mut() {
            for (gi, &c) in g.iter_mut().zip(contrib) {
                *gi += c;
            }
        }
    }

    fn backprop_one(&mut self, out: usize, op: &Op, up: &[f32]) {
        match *op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, k) = (self.nodes[a].t.shape[0], self.nodes[a].t.shape[1]);
                let n = self.nodes[b].t.shape[1];
                if self.requires(a) {
                    let mut da = vec![0.0f32; m * k];
                    matmul_nt(up, &self.nodes[b].t.data, m, n, k, &mut da);
                    self.add_grad(a, &da);
                }
                if self.requires(b) {
                    let mut db = vec![0.0f32; k * n];
                    matmul_tn(&self.nodes[a].t.data, up, m, k, n, &mut db);
                    self.add_grad(b, &db);
                }
            }
            Op::Transpose { a } => {
                if self.requires(a) {
                    let (n, m) = (self.nodes[out].t.shape[0], self.nodes[out].t.shape[1]);
                    let mut da = vec![0.0f32; m * n];
                    for i in 0..n {
                        for j in 0..m {
                            da[j * n + i] = up[i * m + j];
                        }
                    }
                    self.add_grad(a, &da);
                }
            }
            Op::Add { a, b, broadcast } => {
                if self.requires(a) {
                    self.add_grad(a, up);
                }
                if self.requires(b) {
                    if broadcast {
                        let bn = self.nodes[b].t.data.len();
                        let mut db = vec![0.0f32; bn];
                        for (i, &u) in up.iter().enumerate() {
                            db[i % bn] += u;
                        }
                        self.add_grad(b, &db);
                    } else {
                        self.add_grad(b, up);
                    }
                }
            }
            Op::Mul { a, b } => {
                if self.requires(a) {
                    let contrib: Vec<f32> =
                        up.iter().zip(&self.nodes[b].t.data).map(|(&u, &y)| u * y).collect();
                    self.add_grad(a, &contrib);
                }
                if self.requires(b) {
                    let contrib: Vec<f32> =
                        up.iter().zip(&self.nodes[a].t.data).map(|(&u, &x)| u * x).collect();
                    self.add_grad(b, &contrib);
                }
            }
            Op::Scale { a, c } => {
                if self.requires(a) {
                    let contrib: Vec<f32> = up.iter().map(|&u| u * c).collect();
                    self.add_grad(a, &contrib);
                }
            }
            Op::Concat { ref parts, axis } => {
                match axis {
                    0 => {
                        let mut offset = 0;
                        for &p in parts {
                            let len = self.nodes[p].t.data.len();
                            if self.requires(p) {
                                let seg = up[offset..offset + len].to_vec();
                                self.add_grad(p, &seg);
                            }
                            offset += len;
                        }
                    }
                    1 => {
                        let rows = self.nodes[out].t.shape[0];
                        let total = self.nodes[out].t.shape[1];
                        let mut col = 0;
                        for &p in parts {
                            let c = self.nodes[p].t.shape[1];
                            if self.requires(p) {
                                let mut seg = vec![0.0f32; rows * c];
                                for r in 0..rows {
                                    seg[r * c..(r + 1) * c]
                                        .copy_from_slice(&up[r * total + col..r * total + col + c]);
                                }
                                self.add_grad(p, &seg);
                            }
                            col += c;
                        }
                    }
                    _ => unreachable!(),
                }
            }
            Op::Slice { a, axis, start } => {
                if self.requires(a) {
                    let src_shape = self.nodes[a].t.shape.clone();
                    let out_shape = self.nodes[out].t.shape.clone();
                    let mut da = vec![0.0f32; self.nodes[a].t.data.len()];
                    match (src_shape.len(), axis) {
                        (1, 0) => da[start..start + out_shape[0]].copy_from_slice(up),
                        (2, 0) => {
                            let cols = src_shape[1];
                            da[start * cols..start * cols + up.len()].copy_from_slice(up);
                        }
                        (2, 1) => {
                            let cols = src_shape[1];
                            let len = out_shape[1];
                            for r in 0..out_shape[0] {
                                da[r * cols + start..r * cols + start + len]
                                    .copy_from_slice(&up[r * len..(r + 1) * len]);
                            }
                        }
                        _ => unreachable!(),
                    }
                    self.add_grad(a, &da);
                }
            }
            Op::Reshape { a } => {
                if self.requires(a) {
                    self.add_grad(a, up);
                }
            }
            Op::Softmax { a } => {
                if self.requires(a) {
                    let y = &self.nodes[out].t;
                    let cols = *y.shape.last().unwrap();
                    let rows = y.data.len() / cols;
                    let mut da = vec![0.0f32; y.data.len()];
                    for r in 0..rows {
                        let yr = &y.data[r * cols..(r + 1) * cols];
                        let ur = &up[r * cols..(r + 1) * cols];
                        let dot: f32 = yr.iter().zip(ur).map(|(&yv, &uv)| yv * uv).sum();
                        for j in 0..cols {
                            da[r * cols + j] = yr[j] * (ur[j] - dot);
                        }
                    }
                    self.add_grad(a, &da);
                }
            }
            Op::LayerNorm { a, gamma, beta, eps } => {
                let x = &self.nodes[a].t;
                let cols = *x.shape.last().unwrap();
                let rows = x.data.len() / cols;
                let g = self.nodes[gamma].t.data.clone();
                let mut da = vec![0.0f32; x.data.len()];
                let mut dg = vec![0.0f32; cols];
                let mut db = vec![0.0f32; cols];
                for r in 0..rows {
                    let row = &x.data[r * cols..(r + 1) * cols];
                    let ur = &up[r * cols..(r + 1) * cols];
                    let mean = row.iter().sum::<f32>() / cols as f32;
                    let var =
                        row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / cols as f32;
                    let inv = 1.0 / (var + eps).sqrt();
                    let mut mean_dxhat = 0.0f32;
                    let mut mean_dxhat_xhat = 0.0f32;
                    for j in 0..cols {
                        let xhat = (row[j] - mean) * inv;
                        let dxhat = ur[j] * g[j];
                        dg[j] += ur[j] * xhat;
                        db[j] += ur[j];
                        mean_dxhat += dxhat;
                        mean_dxhat_xhat += dxhat * xhat;
                    }
                    mean_dxhat /= cols as f32;
                    mean_dxhat_xhat /= cols as f32;
                    for j in 0..cols {
                        let xhat = (row[j] - mean) * inv;
                        let dxhat = ur[j] * g[j];
                        da[r * cols + j] = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                    }
                }
                if self.requires(a) {
                    self.add_grad(a, &da);
                }
                if self.requires(gamma) {
                    self.add_grad(gamma, &dg);
                }
                if self.requires(beta) {
                    self.add_grad(beta, &db);
                }
            }
            Op::Gelu { a } => {
                if self.requires(a) {
                    let x = &self.nodes[a].t;
                    let contrib: Vec<f32> = x
                        .data
                        .iter()
                        .zip(up)
                        .map(|(&xv, &u)| {
                            let u3 = GELU_C * (xv + GELU_A * xv * xv * xv);
                            let t = fast_tanh(u3);
                            let du = GELU_C * (1.0 + 3.0 * GELU_A * xv * xv);
                            u * (0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * du)
                        })
                        .collect();
                    self.add_grad(a, &contrib);
                }
            }
            Op::Embedding { table, ref ids } => {
                if self.requires(table) {
                    let d = self.nodes[table].t.shape[1];
                    let mut dt = vec![0.0f32; self.nodes[table].t.data.len()];
                    for (r, &id) in ids.iter().enumerate() {
                        let id = id as usize;
                        for j in 0..d {
                            dt[id * d + j] += up[r * d + j];
                        }
                    }
                    self.add_grad(table, &dt);
                }
            }
            Op::CrossEntropy { logits, ref targets } => {
                if self.requires(logits) {
                    let tl = &self.nodes[logits].t;
                    let (m, v) = (tl.shape[0], tl.shape[1]);
                    let scale = up[0] / m as f32;
                    let mut dl = vec![0.0f32; m * v];
                    for (r, &t) in targets.iter().enumerate() {
                        let row = &tl.data[r * v..(r + 1) * v];
                        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                        let sum: f32 = row.iter().map(|&x| fast_exp(x - max)).sum();
                        for j in 0..v {
                            let p = fast_exp(row[j] - max) / sum;
                            dl[r * v + j] =
                                scale * (p - if j == t as usize { 1.0 } else { 0.0 });
                        }
                    }
                    self.add_grad(logits, &dl);
                }
            }
            Op::Sum { a } => {
                if self.requires(a) {
                    let contrib = vec![up[0]; self.nodes[a].t.data.len()];
                    self.add_grad(a, &contrib);
                }
            }
        }
    }
}

fn suffix_of(small: &[usize], big: &[usize]) -> bool {
    small.len() < big.len() && big[big.len() - small.len()..] == *small
}
