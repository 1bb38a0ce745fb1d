//! Minimal reverse-mode autodiff over `ndarray` matrices.
//!
//! A [`Graph`] is a flat tape of nodes created in topological order; calling
//! [`Graph::backward`] on a scalar node accumulates gradients into every node
//! that feeds it. All values are `f64` and two-dimensional; sequences are laid
//! out as rows, feature channels as columns. One graph is built per forward
//! pass, parameters enter as leaves and their gradients are read back out by
//! node id after the backward sweep.

use ndarray::{Array2, Axis};
use std::sync::Arc;

use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Row-broadcast add: `(n x m) + (1 x m)`.
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Transpose(NodeId),
    /// Column slice `[start, start+len)`.
    Cols(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    /// `h` inputs of shape `n x d` stacked so that output row `i*h + j`
    /// is row `i` of input `j`.
    InterleaveRows(Vec<NodeId>),
    Softmax(NodeId),
    CausalSoftmax(NodeId),
    /// `(x, gain, bias)` with gain/bias of shape `1 x d`; row-wise layer norm.
    LayerNorm(NodeId, NodeId, NodeId),
    Gelu(NodeId),
    /// Sum of embedding lookups: tables `k` indexed by `ids[k][t]`, output `t x m`.
    EmbedSum(Vec<NodeId>, Arc<Vec<Vec<usize>>>),
    LogSoftmax(NodeId),
    /// Negative log-likelihood summed over rows with `Some(target)`.
    NllSum(NodeId, Arc<Vec<Option<usize>>>),
    SumAll(NodeId),
}

struct Node {
    value: Array2<f64>,
    grad: Option<Array2<f64>>,
    op: Op,
}

/// Reverse-mode tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated for `id`; zeros if the node did not feed the loss.
    pub fn grad(&self, id: NodeId) -> Array2<f64> {
        match &self.nodes[id.0].grad {
            Some(g) => g.clone(),
            None => Array2::zeros(self.nodes[id.0].value.raw_dim()),
        }
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let r = &self.nodes[row.0].value;
        assert_eq!(r.nrows(), 1, "bias must be a single row");
        let v = &self.nodes[a.0].value + &r.row(0);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = &self.nodes[a.0].value * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.nodes[a.0]
            .value
            .slice(ndarray::s![.., start..start + len])
            .to_owned();
        self.push(v, Op::Cols(a, start, len))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|p| self.nodes[p.0].value.view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat_cols shape mismatch");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|p| self.nodes[p.0].value.view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("concat_rows shape mismatch");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn interleave_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let h = parts.len();
        let (n, d) = self.nodes[parts[0].0].value.dim();
        let mut v = Array2::zeros((n * h, d));
        for (j, p) in parts.iter().enumerate() {
            let src = &self.nodes[p.0].value;
            assert_eq!(src.dim(), (n, d), "interleave_rows shape mismatch");
            for i in 0..n {
                v.row_mut(i * h + j).assign(&src.row(i));
            }
        }
        self.push(v, Op::InterleaveRows(parts.to_vec()))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = softmax_rows(&self.nodes[a.0].value, false);
        self.push(v, Op::Softmax(a))
    }

    /// Row-wise softmax with entries at column `j > i` masked out.
    pub fn causal_softmax(&mut self, a: NodeId) -> NodeId {
        let v = softmax_rows(&self.nodes[a.0].value, true);
        self.push(v, Op::CausalSoftmax(a))
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let g = self.nodes[gain.0].value.row(0).to_owned();
        let b = self.nodes[bias.0].value.row(0).to_owned();
        let mut v = Array2::zeros(xv.raw_dim());
        for (i, row) in xv.rows().into_iter().enumerate() {
            let (mu, sd) = row_moments(&row.to_owned());
            for (j, &xj) in row.iter().enumerate() {
                v[[i, j]] = (xj - mu) / sd * g[j] + b[j];
            }
        }
        self.push(v, Op::LayerNorm(x, gain, bias))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.mapv(gelu_tanh);
        self.push(v, Op::Gelu(a))
    }

    pub fn embed_sum(&mut self, tables: &[NodeId], ids: Arc<Vec<Vec<usize>>>) -> NodeId {
        assert_eq!(tables.len(), ids.len());
        let t_len = ids[0].len();
        let m = self.nodes[tables[0].0].value.ncols();
        let mut v = Array2::zeros((t_len, m));
        for (k, tab) in tables.iter().enumerate() {
            let table = &self.nodes[tab.0].value;
            for (t, &id) in ids[k].iter().enumerate() {
                let mut row = v.row_mut(t);
                row += &table.row(id);
            }
        }
        self.push(v, Op::EmbedSum(tables.to_vec(), ids))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a.0].value;
        let mut v = x.clone();
        for mut row in v.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
            row.mapv_inplace(|z| z - lse);
        }
        self.push(v, Op::LogSoftmax(a))
    }

    pub fn nll_sum(&mut self, logp: NodeId, targets: Arc<Vec<Option<usize>>>) -> NodeId {
        let lp = &self.nodes[logp.0].value;
        assert_eq!(lp.nrows(), targets.len());
        let mut s = 0.0;
        for (t, tgt) in targets.iter().enumerate() {
            if let Some(c) = tgt {
                s -= lp[[t, *c]];
            }
        }
        self.push(
            Array2::from_elem((1, 1), s),
            Op::NllSum(logp, targets),
        )
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.nodes[a.0].value.sum();
        self.push(Array2::from_elem((1, 1), s), Op::SumAll(a))
    }

    /// Backpropagate from a scalar node, accumulating gradients on the tape.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let lshape = self.nodes[loss.0].value.dim();
        if lshape != (1, 1) {
            return Err(Error::numeric(format!(
                "backward requires a 1x1 scalar node, got {lshape:?}"
            )));
        }
        if !self.nodes[loss.0].value[[0, 0]].is_finite() {
            return Err(Error::numeric("non-finite loss in backward"));
        }
        self.nodes[loss.0].grad = Some(Array2::from_elem((1, 1), 1.0));
        for idx in (0..=loss.0).rev() {
            let g = match self.nodes[idx].grad.take() {
                Some(g) => g,
                None => continue,
            };
            self.dispatch(idx, &g);
            self.nodes[idx].grad = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, delta: &Array2<f64>) {
        let node = &mut self.nodes[id.0];
        match &mut node.grad {
            Some(g) => *g += delta,
            None => node.grad = Some(delta.clone()),
        }
    }

    fn dispatch(&mut self, idx: usize, g: &Array2<f64>) {
        // Ops are matched by value to avoid holding a borrow into the arena.
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let ga = g.dot(&self.nodes[b.0].value.t());
                let gb = self.nodes[a.0].value.t().dot(g);
                self.accumulate(*a, &ga);
                self.accumulate(*b, &gb);
            }
            Op::Add(a, b) => {
                self.accumulate(*a, g);
                self.accumulate(*b, g);
            }
            Op::AddRow(a, row) => {
                self.accumulate(*a, g);
                let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                self.accumulate(*row, &gr);
            }
            Op::Scale(a, c) => {
                self.accumulate(*a, &(g * *c));
            }
            Op::Transpose(a) => {
                self.accumulate(*a, &g.t().to_owned());
            }
            Op::Cols(a, start, len) => {
                let mut ga = Array2::zeros(self.nodes[a.0].value.raw_dim());
                ga.slice_mut(ndarray::s![.., *start..start + len]).assign(g);
                self.accumulate(*a, &ga);
            }
            Op::ConcatCols(parts) => {
                let mut c = 0;
                for p in parts {
                    let w = self.nodes[p.0].value.ncols();
                    let gp = g.slice(ndarray::s![.., c..c + w]).to_owned();
                    self.accumulate(*p, &gp);
                    c += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut r = 0;
                for p in parts {
                    let h = self.nodes[p.0].value.nrows();
                    let gp = g.slice(ndarray::s![r..r + h, ..]).to_owned();
                    self.accumulate(*p, &gp);
                    r += h;
                }
            }
            Op::InterleaveRows(parts) => {
                let h = parts.len();
                for (j, p) in parts.iter().enumerate() {
                    let (n, d) = self.nodes[p.0].value.dim();
                    let mut gp = Array2::zeros((n, d));
                    for i in 0..n {
                        gp.row_mut(i).assign(&g.row(i * h + j));
                    }
                    self.accumulate(*p, &gp);
                }
            }
            Op::Softmax(a) | Op::CausalSoftmax(a) => {
                let y = &self.nodes[idx].value;
                let mut gx = Array2::zeros(y.raw_dim());
                for i in 0..y.nrows() {
                    let dot: f64 = (0..y.ncols()).map(|j| g[[i, j]] * y[[i, j]]).sum();
                    for j in 0..y.ncols() {
                        gx[[i, j]] = y[[i, j]] * (g[[i, j]] - dot);
                    }
                }
                self.accumulate(*a, &gx);
            }
            Op::LayerNorm(x, gain, bias) => {
                let xv = self.nodes[x.0].value.clone();
                let gv = self.nodes[gain.0].value.row(0).to_owned();
                let d = xv.ncols() as f64;
                let mut gx = Array2::zeros(xv.raw_dim());
                let mut ggain = Array2::zeros((1, xv.ncols()));
                let mut gbias = Array2::zeros((1, xv.ncols()));
                for i in 0..xv.nrows() {
                    let row = xv.row(i).to_owned();
                    let (mu, sd) = row_moments(&row);
                    let xhat: Vec<f64> = row.iter().map(|&z| (z - mu) / sd).collect();
                    let gy: Vec<f64> = (0..xv.ncols()).map(|j| g[[i, j]]).collect();
                    let gxh: Vec<f64> = (0..xv.ncols()).map(|j| gy[j] * gv[j]).collect();
                    let mean_gxh = gxh.iter().sum::<f64>() / d;
                    let mean_gxh_xhat =
                        gxh.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d;
                    for j in 0..xv.ncols() {
                        gx[[i, j]] = (gxh[j] - mean_gxh - xhat[j] * mean_gxh_xhat) / sd;
                        ggain[[0, j]] += gy[j] * xhat[j];
                        gbias[[0, j]] += gy[j];
                    }
                }
                self.accumulate(*x, &gx);
                self.accumulate(*gain, &ggain);
                self.accumulate(*bias, &gbias);
            }
            Op::Gelu(a) => {
                let x = &self.nodes[a.0].value;
                let mut ga = Array2::zeros(x.raw_dim());
                ndarray::Zip::from(&mut ga).and(x).and(g).for_each(|o, &xi, &gi| {
                    *o = gi * gelu_tanh_deriv(xi);
                });
                self.accumulate(*a, &ga);
            }
            Op::EmbedSum(tables, ids) => {
                for (k, tab) in tables.iter().enumerate() {
                    let mut gt = Array2::zeros(self.nodes[tab.0].value.raw_dim());
                    for (t, &id) in ids[k].iter().enumerate() {
                        let mut row = gt.row_mut(id);
                        row += &g.row(t);
                    }
                    self.accumulate(*tab, &gt);
                }
            }
            Op::LogSoftmax(a) => {
                let y = &self.nodes[idx].value; // log-probs
                let mut gx = Array2::zeros(y.raw_dim());
                for i in 0..y.nrows() {
                    let gsum: f64 = (0..y.ncols()).map(|j| g[[i, j]]).sum();
                    for j in 0..y.ncols() {
                        gx[[i, j]] = g[[i, j]] - y[[i, j]].exp() * gsum;
                    }
                }
                self.accumulate(*a, &gx);
            }
            Op::NllSum(logp, targets) => {
                let s = g[[0, 0]];
                let mut gl = Array2::zeros(self.nodes[logp.0].value.raw_dim());
                for (t, tgt) in targets.iter().enumerate() {
                    if let Some(c) = tgt {
                        gl[[t, *c]] -= s;
                    }
                }
                self.accumulate(*logp, &gl);
            }
            Op::SumAll(a) => {
                let s = g[[0, 0]];
                let ga = Array2::from_elem(self.nodes[a.0].value.raw_dim(), s);
                self.accumulate(*a, &ga);
            }
        }
        self.nodes[idx].op = op;
    }
}

fn row_moments(row: &ndarray::Array1<f64>) -> (f64, f64) {
    let d = row.len() as f64;
    let mu = row.sum() / d;
    let var = row.iter().map(|&z| (z - mu) * (z - mu)).sum::<f64>() / d;
    (mu, (var + LN_EPS).sqrt())
}

fn softmax_rows(x: &Array2<f64>, causal: bool) -> Array2<f64> {
    let mut v = Array2::zeros(x.raw_dim());
    for i in 0..x.nrows() {
        let limit = if causal { (i + 1).min(x.ncols()) } else { x.ncols() };
        let mut max = f64::NEG_INFINITY;
        for j in 0..limit {
            max = max.max(x[[i, j]]);
        }
        let mut denom = 0.0;
        for j in 0..limit {
            denom += (x[[i, j]] - max).exp();
        }
        for j in 0..limit {
            v[[i, j]] = (x[[i, j]] - max).exp() / denom;
        }
    }
    v
}

pub(crate) fn gelu_tanh(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_tanh_deriv(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Multi-head scaled dot-product attention building block.
///
/// `wq/wk/wv` are `d x d` matrices interpreted as `n_heads` column blocks of
/// width `d / n_heads`; the per-head outputs are concatenated back to `d`
/// columns. `wo`, when present, is a final `d x d` output projection.
/// Scores are scaled by `1/sqrt(d/n_heads)`.
#[allow(clippy::too_many_arguments)]
pub fn attention(
    g: &mut Graph,
    x_q: NodeId,
    x_kv: NodeId,
    wq: NodeId,
    wk: NodeId,
    wv: NodeId,
    wo: Option<NodeId>,
    n_heads: usize,
    causal: bool,
) -> NodeId {
    let d = g.value(wq).ncols();
    assert!(d.is_multiple_of(n_heads), "head count must divide width");
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = g.matmul(x_q, wq);
    let k = g.matmul(x_kv, wk);
    let v = g.matmul(x_kv, wv);
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = g.cols(q, h * dh, dh);
        let kh = g.cols(k, h * dh, dh);
        let vh = g.cols(v, h * dh, dh);
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt);
        let scaled = g.scale(scores, scale);
        let attn = if causal {
            g.causal_softmax(scaled)
        } else {
            g.softmax(scaled)
        };
        heads.push(g.matmul(attn, vh));
    }
    let cat = g.concat_cols(&heads);
    match wo {
        Some(w) => g.matmul(cat, w),
        None => cat,
    }
}
