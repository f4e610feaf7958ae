//! Reverse-mode automatic differentiation over a dynamically recorded graph.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value
//! and the ids of its inputs. [`Graph::backward`] walks the tape in reverse
//! and accumulates vector-Jacobian products into the nodes that require a
//! gradient. Leaves are created as parameters (borrowed, differentiable),
//! variables (owned, differentiable) or constants.
//!
//! Operations are tensor-level and fused where the fused backward is both
//! simpler and cheaper than composing primitives (layer norm, causal
//! attention, cross-entropy).
//!
//! ```
//! use knowedit::numerics::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.variable(Tensor::vector(vec![3.0]));
//! let y = g.mul(x, x);
//! let loss = g.sum(y);
//! let grads = g.backward(loss);
//! assert_eq!(g.value(loss).data(), &[9.0]);
//! assert_eq!(grads.get(x).unwrap(), &[6.0]);
//! ```

use std::borrow::Cow;

use crate::numerics::tensor::{dot, matmul_nt_into, matmul_tn_into};
use crate::numerics::{Activation, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A contiguous run of rows forming one causal sequence inside a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

/// One supervised row of a cross-entropy loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CeTarget {
    pub row: usize,
    pub class: usize,
    pub weight: f64,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    LayerNorm { x: Var, gain: Var, bias: Var, rstd: Vec<f64> },
    Embed { table: Var, ids: Vec<u32> },
    Attention { q: Var, k: Var, v: Var, heads: usize, segments: Vec<Segment>, probs: Vec<f64> },
    AddRow { x: Var, row: usize, v: Var },
    CrossEntropy { logits: Var, targets: Vec<CeTarget>, lse: Vec<f64> },
    Sum(Var),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Cow::Owned(value), op, rg)
    }

    /// Borrowed differentiable leaf.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, true)
    }

    /// Borrowed leaf that never receives a gradient.
    pub fn frozen(&mut self, t: &'a Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, false)
    }

    /// Owned differentiable leaf.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b)).expect("matmul shapes");
        self.push_op(out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).add(self.value(b)).expect("add shapes");
        self.push_op(out, Op::Add(a, b), &[a, b])
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(bias));
        assert_eq!(av.cols(), bv.len(), "bias width");
        let mut out = av.clone();
        let n = bv.len();
        for row in out.data_mut().chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        self.push_op(out, Op::AddBias(a, bias), &[a, bias])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mul shapes");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("shape");
        self.push_op(out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        self.push_op(out, Op::Scale(a, s), &[a])
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| kind.apply(x)).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("shape");
        self.push_op(out, Op::Act(a, kind), &[a])
    }

    /// Row-wise layer norm with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let n = xv.cols();
        assert_eq!(gv.len(), n, "layer norm gain width");
        assert_eq!(bv.len(), n, "layer norm bias width");
        let rows = xv.rows();
        let mut out = vec![0.0; rows * n];
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd.push(rs);
            for j in 0..n {
                out[r * n + j] = (row[j] - mean) * rs * gv.data()[j] + bv.data()[j];
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), out).expect("shape");
        self.push_op(out, Op::LayerNorm { x, gain, bias, rstd }, &[x, gain, bias])
    }

    /// Gathers rows of `table` (`V×d`) by id.
    pub fn embed(&mut self, table: Var, ids: &[u32]) -> Var {
        let tv = self.value(table);
        let d = tv.cols();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(tv.row(id as usize));
        }
        let out = Tensor::matrix(ids.len(), d, out).expect("shape");
        self.push_op(out, Op::Embed { table, ids: ids.to_vec() }, &[table])
    }

    /// Multi-head causal self-attention over `q`, `k`, `v` (`N×d` each).
    ///
    /// Rows are grouped into independent causal sequences by `segments`.
    pub fn causal_attention(&mut self, q: Var, k: Var, v: Var, heads: usize, segments: &[Segment]) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, d) = (qv.rows(), qv.cols());
        assert!(d % heads == 0, "heads must divide width");
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = vec![0.0; rows * d];
        let total: usize = segments.iter().map(|s| heads * s.len * s.len).sum();
        let mut probs = vec![0.0; total];
        let mut off = 0;
        let mut scores = Vec::new();
        for seg in segments {
            let t = seg.len;
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let p = &mut probs[off..off + t * t];
                for i in 0..t {
                    let qi = &qv.row(seg.start + i)[cols.clone()];
                    scores.clear();
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..=i {
                        let s = dot(qi, &kv.row(seg.start + j)[cols.clone()]) * scale;
                        max = max.max(s);
                        scores.push(s);
                    }
                    let mut z = 0.0;
                    for s in scores.iter_mut() {
                        *s = (*s - max).exp();
                        z += *s;
                    }
                    let orow = &mut out[(seg.start + i) * d..(seg.start + i + 1) * d];
                    for j in 0..=i {
                        let pij = scores[j] / z;
                        p[i * t + j] = pij;
                        let vj = &vv.row(seg.start + j)[cols.clone()];
                        for (o, x) in orow[cols.clone()].iter_mut().zip(vj) {
                            *o += pij * x;
                        }
                    }
                }
                off += t * t;
            }
        }
        let out = Tensor::matrix(rows, d, out).expect("shape");
        let op = Op::Attention { q, k, v, heads, segments: segments.to_vec(), probs };
        self.push_op(out, op, &[q, k, v])
    }

    /// Head-averaged attention row of query `pos` in segment `seg` of an
    /// attention node; entries after `pos` are exactly zero.
    pub fn attention_row(&self, node: Var, seg: usize, pos: usize) -> Option<Vec<f64>> {
        let Op::Attention { heads, segments, probs, .. } = &self.nodes[node.0].op else {
            return None;
        };
        let off: usize = segments[..seg].iter().map(|s| heads * s.len * s.len).sum();
        let t = segments.get(seg)?.len;
        if pos >= t {
            return None;
        }
        let mut row = vec![0.0; t];
        for h in 0..*heads {
            let base = off + h * t * t + pos * t;
            for (r, p) in row.iter_mut().zip(&probs[base..base + t]) {
                *r += p;
            }
        }
        for r in row.iter_mut() {
            *r /= *heads as f64;
        }
        Some(row)
    }

    /// Adds vector `v` to row `row` of `x`.
    pub fn add_row(&mut self, x: Var, row: usize, v: Var) -> Var {
        let mut out = self.value(x).clone();
        let vv = self.value(v);
        assert_eq!(vv.len(), out.cols(), "add_row width");
        for (o, a) in out.row_mut(row).iter_mut().zip(vv.data()) {
            *o += a;
        }
        self.push_op(out, Op::AddRow { x, row, v }, &[x, v])
    }

    /// `Σ w·(logsumexp(logits[row]) − logits[row, class])` over the targets.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[CeTarget]) -> Var {
        let lv = self.value(logits);
        let mut loss = 0.0;
        let mut lse = Vec::with_capacity(targets.len());
        for t in targets {
            let row = lv.row(t.row);
            let l = log_sum_exp(row);
            lse.push(l);
            loss += t.weight * (l - row[t.class]);
        }
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), lse };
        self.push_op(Tensor::vector(vec![loss]), op, &[logits])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push_op(Tensor::vector(vec![s]), Op::Sum(a), &[a])
    }

    /// Back-propagates from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Gradients { grads };
        }
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(gout) = grads[i].take() else { continue };
            self.backprop_node(node, &gout, &mut grads);
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(gout);
            }
        }
        Gradients { grads }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, node: &Node<'a>, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if self.wants(*a) {
                    matmul_nt_into(gout, bv.data(), acc(grads, *a, m * k), m, n, k);
                }
                if self.wants(*b) {
                    matmul_tn_into(av.data(), gout, acc(grads, *b, k * n), m, k, n);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        axpy(acc(grads, *v, gout.len()), 1.0, gout);
                    }
                }
            }
            Op::AddBias(a, bias) => {
                if self.wants(*a) {
                    axpy(acc(grads, *a, gout.len()), 1.0, gout);
                }
                if self.wants(*bias) {
                    let n = self.value(*bias).len();
                    let g = acc(grads, *bias, n);
                    for row in gout.chunks(n) {
                        axpy(g, 1.0, row);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let g = acc(grads, *a, gout.len());
                    for ((g, go), y) in g.iter_mut().zip(gout).zip(bv.data()) {
                        *g += go * y;
                    }
                }
                if self.wants(*b) {
                    let g = acc(grads, *b, gout.len());
                    for ((g, go), x) in g.iter_mut().zip(gout).zip(av.data()) {
                        *g += go * x;
                    }
                }
            }
            Op::Scale(a, s) => {
                if self.wants(*a) {
                    axpy(acc(grads, *a, gout.len()), *s, gout);
                }
            }
            Op::Act(a, kind) => {
                if self.wants(*a) {
                    let x = self.value(*a).data();
                    let g = acc(grads, *a, gout.len());
                    for ((g, go), xv) in g.iter_mut().zip(gout).zip(x) {
                        *g += go * kind.derivative(*xv);
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, rstd } => {
                let xv = self.value(*x);
                let gv = self.value(*gain).data();
                let n = xv.cols();
                let rows = xv.rows();
                let mut xhat = vec![0.0; n];
                let mut dxhat = vec![0.0; n];
                let mut dgain = vec![0.0; n];
                let mut dbias = vec![0.0; n];
                let mut dx = if self.wants(*x) { vec![0.0; rows * n] } else { Vec::new() };
                for r in 0..rows {
                    let row = xv.row(r);
                    let mean = row.iter().sum::<f64>() / n as f64;
                    let go = &gout[r * n..(r + 1) * n];
                    for j in 0..n {
                        xhat[j] = (row[j] - mean) * rstd[r];
                        dxhat[j] = go[j] * gv[j];
                        dgain[j] += go[j] * xhat[j];
                        dbias[j] += go[j];
                    }
                    if !dx.is_empty() {
                        let m1 = dxhat.iter().sum::<f64>() / n as f64;
                        let m2 = dot(&dxhat, &xhat) / n as f64;
                        for j in 0..n {
                            dx[r * n + j] = rstd[r] * (dxhat[j] - m1 - xhat[j] * m2);
                        }
                    }
                }
                if !dx.is_empty() {
                    axpy(acc(grads, *x, rows * n), 1.0, &dx);
                }
                if self.wants(*gain) {
                    axpy(acc(grads, *gain, n), 1.0, &dgain);
                }
                if self.wants(*bias) {
                    axpy(acc(grads, *bias, n), 1.0, &dbias);
                }
            }
            Op::Embed { table, ids } => {
                if self.wants(*table) {
                    let tv = self.value(*table);
                    let d = tv.cols();
                    let g = acc(grads, *table, tv.len());
                    for (r, &id) in ids.iter().enumerate() {
                        let id = id as usize;
                        axpy(&mut g[id * d..(id + 1) * d], 1.0, &gout[r * d..(r + 1) * d]);
                    }
                }
            }
            Op::Attention { q, k, v, heads, segments, probs } => {
                self.backprop_attention(*q, *k, *v, *heads, segments, probs, gout, grads);
            }
            Op::AddRow { x, row, v } => {
                if self.wants(*x) {
                    axpy(acc(grads, *x, gout.len()), 1.0, gout);
                }
                if self.wants(*v) {
                    let n = self.value(*v).len();
                    axpy(acc(grads, *v, n), 1.0, &gout[row * n..(row + 1) * n]);
                }
            }
            Op::CrossEntropy { logits, targets, lse } => {
                if self.wants(*logits) {
                    let lv = self.value(*logits);
                    let vcols = lv.cols();
                    let g = acc(grads, *logits, lv.len());
                    let up = gout[0];
                    for (t, l) in targets.iter().zip(lse) {
                        let row = lv.row(t.row);
                        let grow = &mut g[t.row * vcols..(t.row + 1) * vcols];
                        let w = up * t.weight;
                        for (gj, x) in grow.iter_mut().zip(row) {
                            *gj += w * (x - l).exp();
                        }
                        grow[t.class] -= w;
                    }
                }
            }
            Op::Sum(a) => {
                if self.wants(*a) {
                    let n = self.value(*a).len();
                    let g = acc(grads, *a, n);
                    for x in g.iter_mut() {
                        *x += gout[0];
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_attention(
        &self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        segments: &[Segment],
        probs: &[f64],
        gout: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, d) = (qv.rows(), qv.cols());
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = vec![0.0; rows * d];
        let mut dk = vec![0.0; rows * d];
        let mut dv = vec![0.0; rows * d];
        let mut dp = Vec::new();
        let mut off = 0;
        for seg in segments {
            let t = seg.len;
            for h in 0..heads {
                let c0 = h * dh;
                let p = &probs[off..off + t * t];
                for i in 0..t {
                    let ri = seg.start + i;
                    let go = &gout[ri * d + c0..ri * d + c0 + dh];
                    dp.clear();
                    let mut weighted = 0.0;
                    for j in 0..=i {
                        let rj = seg.start + j;
                        let pij = p[i * t + j];
                        let dpij = dot(go, &vv.row(rj)[c0..c0 + dh]);
                        dp.push(dpij);
                        weighted += pij * dpij;
                        axpy(&mut dv[rj * d + c0..rj * d + c0 + dh], pij, go);
                    }
                    for j in 0..=i {
                        let rj = seg.start + j;
                        let ds = p[i * t + j] * (dp[j] - weighted) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        axpy(&mut dq[ri * d + c0..ri * d + c0 + dh], ds, &kv.row(rj)[c0..c0 + dh]);
                        axpy(&mut dk[rj * d + c0..rj * d + c0 + dh], ds, &qv.row(ri)[c0..c0 + dh]);
                    }
                }
                off += t * t;
            }
        }
        for (var, g) in [(q, dq), (k, dk), (v, dv)] {
            if self.wants(var) {
                axpy(acc(grads, var, rows * d), 1.0, &g);
            }
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Row-wise log-softmax of a plain slice.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let l = log_sum_exp(row);
    row.iter().map(|x| x - l).collect()
}
