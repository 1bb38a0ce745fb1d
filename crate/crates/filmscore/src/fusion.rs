//! Long/short-term feature refinement and cross-attention fusion.
//!
//! Each branch refines the per-frame class tokens of its frame selection with
//! a two-layer pre-norm self-attention encoder. The second layer's head
//! outputs are laid out along the sequence axis (frame-major, head-minor), so
//! a branch over `N_t` frames with `N_H` heads yields `(N_t * N_H) x D` rows.
//! Fusion then cross-attends: queries from the short-term rows, keys/values
//! from the long-term rows, with a residual path adding the short-term rows
//! back, followed by a linear projection to the decoder width `M`.
//!
//! The cross-attention projections are stored as `C x C` matrices read as `h`
//! column blocks of shape `C x (C/h)`, one per head; with `h = 1` they are
//! literally single `C x C` maps. No layer norm follows the fusion residual.

use ndarray::{Array2, ArrayView3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Graph, NodeId};

/// Which refiner branch to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Long,
    Short,
}

/// Refined per-branch features: `(n_frames * n_heads) x dim` rows.
#[derive(Debug, Clone)]
pub struct TermFeatures {
    pub values: Array2<f64>,
    pub n_frames: usize,
    pub n_heads: usize,
}

impl TermFeatures {
    pub fn new(values: Array2<f64>, n_frames: usize, n_heads: usize) -> Result<Self> {
        if values.nrows() != n_frames * n_heads {
            return Err(Error::config(format!(
                "term features have {} rows, expected {} * {}",
                values.nrows(),
                n_frames,
                n_heads
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("term features contain non-finite entries"));
        }
        Ok(TermFeatures {
            values,
            n_frames,
            n_heads,
        })
    }
}

/// Fused conditioning consumed by the token decoder: `(N_s * N_H) x M`.
#[derive(Debug, Clone)]
pub struct Conditioning {
    pub values: Array2<f64>,
}

impl Conditioning {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("conditioning contains non-finite entries"));
        }
        Ok(Conditioning { values })
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

/// Dimensions of the fusion stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Feature width `D` (== the cross-attention embedding dim `C`; the
    /// residual in the fusion equation forces them equal).
    pub dim: usize,
    /// Refiner head count `N_H`.
    pub refiner_heads: usize,
    /// Cross-attention head count `h`; must divide `dim`.
    pub cross_heads: usize,
    /// Decoder conditioning width `M`.
    pub out_dim: usize,
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.out_dim == 0 {
            return Err(Error::config("fusion dims must be positive"));
        }
        if self.refiner_heads == 0 || !self.dim.is_multiple_of(self.refiner_heads) {
            return Err(Error::config(format!(
                "refiner head count {} must divide dim {}",
                self.refiner_heads, self.dim
            )));
        }
        if self.cross_heads == 0 || !self.dim.is_multiple_of(self.cross_heads) {
            return Err(Error::config(format!(
                "cross-attention head count {} must divide dim {}",
                self.cross_heads, self.dim
            )));
        }
        Ok(())
    }
}

/// One branch refiner: pre-norm self-attention layer plus the head-expansion
/// layer whose per-head outputs are stacked along the sequence axis.
#[derive(Debug, Clone)]
pub struct RefinerParams {
    pub ln1_gain: Array2<f64>,
    pub ln1_bias: Array2<f64>,
    pub wq1: Array2<f64>,
    pub wk1: Array2<f64>,
    pub wv1: Array2<f64>,
    pub wo1: Array2<f64>,
    pub ln2_gain: Array2<f64>,
    pub ln2_bias: Array2<f64>,
    pub wq2: Array2<f64>,
    pub wk2: Array2<f64>,
    pub wv2: Array2<f64>,
    /// Read as `n_heads` row blocks of `(dim/n_heads) x dim`: per-head
    /// up-projection back to `dim` columns.
    pub wo2: Array2<f64>,
}

/// All trainable fusion parameters.
#[derive(Debug, Clone)]
pub struct FusionParams {
    pub config: FusionConfig,
    pub long: RefinerParams,
    pub short: RefinerParams,
    /// Cross-attention projections, `h` column blocks each.
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    /// Output projection to the decoder width.
    pub w_proj: Array2<f64>,
    pub b_proj: Array2<f64>,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

fn refiner_init(rng: &mut ChaCha8Rng, d: usize) -> RefinerParams {
    RefinerParams {
        ln1_gain: Array2::ones((1, d)),
        ln1_bias: Array2::zeros((1, d)),
        wq1: xavier(rng, d, d),
        wk1: xavier(rng, d, d),
        wv1: xavier(rng, d, d),
        wo1: xavier(rng, d, d),
        ln2_gain: Array2::ones((1, d)),
        ln2_bias: Array2::zeros((1, d)),
        wq2: xavier(rng, d, d),
        wk2: xavier(rng, d, d),
        wv2: xavier(rng, d, d),
        wo2: xavier(rng, d, d),
    }
}

fn refiner_identity(d: usize) -> RefinerParams {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut r = refiner_init(&mut rng, d);
    r.wo1 = Array2::zeros((d, d));
    r.wo2 = Array2::zeros((d, d));
    r
}

impl FusionParams {
    pub fn init(config: FusionConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim;
        Ok(FusionParams {
            config,
            long: refiner_init(&mut rng, d),
            short: refiner_init(&mut rng, d),
            w_q: xavier(&mut rng, d, d),
            w_k: xavier(&mut rng, d, d),
            w_v: xavier(&mut rng, d, d),
            w_proj: xavier(&mut rng, d, config.out_dim),
            b_proj: Array2::zeros((1, config.out_dim)),
        })
    }

    /// Parameters whose attention contributions are zeroed: both refiners act
    /// as class-token replication and fusion reduces to its residual path.
    pub fn identity(config: FusionConfig) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        Ok(FusionParams {
            config,
            long: refiner_identity(d),
            short: refiner_identity(d),
            w_q: xavier(&mut rng, d, d),
            w_k: xavier(&mut rng, d, d),
            w_v: Array2::zeros((d, d)),
            w_proj: Array2::eye(d.max(config.out_dim))
                .slice(ndarray::s![..d, ..config.out_dim])
                .to_owned(),
            b_proj: Array2::zeros((1, config.out_dim)),
        })
    }

    /// Named views of every tensor, in a stable order shared with
    /// [`FusionNodes::grads`] and the checkpoint format.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        for (branch, r) in [("long", &self.long), ("short", &self.short)] {
            for (name, t) in [
                ("ln1_gain", &r.ln1_gain),
                ("ln1_bias", &r.ln1_bias),
                ("wq1", &r.wq1),
                ("wk1", &r.wk1),
                ("wv1", &r.wv1),
                ("wo1", &r.wo1),
                ("ln2_gain", &r.ln2_gain),
                ("ln2_bias", &r.ln2_bias),
                ("wq2", &r.wq2),
                ("wk2", &r.wk2),
                ("wv2", &r.wv2),
                ("wo2", &r.wo2),
            ] {
                out.push((format!("fusion.{branch}.{name}"), t));
            }
        }
        out.push(("fusion.w_q".to_string(), &self.w_q));
        out.push(("fusion.w_k".to_string(), &self.w_k));
        out.push(("fusion.w_v".to_string(), &self.w_v));
        out.push(("fusion.w_proj".to_string(), &self.w_proj));
        out.push(("fusion.b_proj".to_string(), &self.b_proj));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = Vec::new();
        for (branch, r) in [("long", &mut self.long), ("short", &mut self.short)] {
            for (name, t) in [
                ("ln1_gain", &mut r.ln1_gain),
                ("ln1_bias", &mut r.ln1_bias),
                ("wq1", &mut r.wq1),
                ("wk1", &mut r.wk1),
                ("wv1", &mut r.wv1),
                ("wo1", &mut r.wo1),
                ("ln2_gain", &mut r.ln2_gain),
                ("ln2_bias", &mut r.ln2_bias),
                ("wq2", &mut r.wq2),
                ("wk2", &mut r.wk2),
                ("wv2", &mut r.wv2),
                ("wo2", &mut r.wo2),
            ] {
                out.push((format!("fusion.{branch}.{name}"), t));
            }
        }
        out.push(("fusion.w_q".to_string(), &mut self.w_q));
        out.push(("fusion.w_k".to_string(), &mut self.w_k));
        out.push(("fusion.w_v".to_string(), &mut self.w_v));
        out.push(("fusion.w_proj".to_string(), &mut self.w_proj));
        out.push(("fusion.b_proj".to_string(), &mut self.b_proj));
        out
    }
}

struct RefinerNodes {
    ln1_gain: NodeId,
    ln1_bias: NodeId,
    wq1: NodeId,
    wk1: NodeId,
    wv1: NodeId,
    wo1: NodeId,
    ln2_gain: NodeId,
    ln2_bias: NodeId,
    wq2: NodeId,
    wk2: NodeId,
    wv2: NodeId,
    wo2: NodeId,
}

/// Leaf node ids for every fusion tensor bound into one graph.
pub struct FusionNodes {
    long: RefinerNodes,
    short: RefinerNodes,
    w_q: NodeId,
    w_k: NodeId,
    w_v: NodeId,
    w_proj: NodeId,
    b_proj: NodeId,
    refiner_heads: usize,
    cross_heads: usize,
    dim: usize,
}

fn bind_refiner(g: &mut Graph, r: &RefinerParams) -> RefinerNodes {
    RefinerNodes {
        ln1_gain: g.leaf(r.ln1_gain.clone()),
        ln1_bias: g.leaf(r.ln1_bias.clone()),
        wq1: g.leaf(r.wq1.clone()),
        wk1: g.leaf(r.wk1.clone()),
        wv1: g.leaf(r.wv1.clone()),
        wo1: g.leaf(r.wo1.clone()),
        ln2_gain: g.leaf(r.ln2_gain.clone()),
        ln2_bias: g.leaf(r.ln2_bias.clone()),
        wq2: g.leaf(r.wq2.clone()),
        wk2: g.leaf(r.wk2.clone()),
        wv2: g.leaf(r.wv2.clone()),
        wo2: g.leaf(r.wo2.clone()),
    }
}

impl FusionNodes {
    /// Bind all parameters as graph leaves.
    pub fn bind(g: &mut Graph, params: &FusionParams) -> Self {
        FusionNodes {
            long: bind_refiner(g, &params.long),
            short: bind_refiner(g, &params.short),
            w_q: g.leaf(params.w_q.clone()),
            w_k: g.leaf(params.w_k.clone()),
            w_v: g.leaf(params.w_v.clone()),
            w_proj: g.leaf(params.w_proj.clone()),
            b_proj: g.leaf(params.b_proj.clone()),
            refiner_heads: params.config.refiner_heads,
            cross_heads: params.config.cross_heads,
            dim: params.config.dim,
        }
    }

    /// Gradients in the same order as [`FusionParams::tensors`].
    pub fn grads(&self, g: &Graph) -> Vec<Array2<f64>> {
        let mut out = Vec::new();
        for r in [&self.long, &self.short] {
            for id in [
                r.ln1_gain, r.ln1_bias, r.wq1, r.wk1, r.wv1, r.wo1, r.ln2_gain, r.ln2_bias,
                r.wq2, r.wk2, r.wv2, r.wo2,
            ] {
                out.push(g.grad(id));
            }
        }
        for id in [self.w_q, self.w_k, self.w_v, self.w_proj, self.b_proj] {
            out.push(g.grad(id));
        }
        out
    }

    /// Refine a branch's class tokens; returns `(n_frames * n_heads) x dim`.
    pub fn refine_graph(&self, g: &mut Graph, class_tokens: NodeId, branch: Branch) -> NodeId {
        let r = match branch {
            Branch::Long => &self.long,
            Branch::Short => &self.short,
        };
        let h = self.refiner_heads;
        let dh = self.dim / h;
        let scale = 1.0 / (dh as f64).sqrt();

        // Layer 1: pre-norm multi-head self-attention with residual.
        let normed = g.layer_norm(class_tokens, r.ln1_gain, r.ln1_bias);
        let attn1 = crate::nn::attention(g, normed, normed, r.wq1, r.wk1, r.wv1, Some(r.wo1), h, false);
        let x = g.add(class_tokens, attn1);

        // Layer 2: per-head self-attention outputs up-projected and stacked
        // along the sequence axis, frame-major head-minor; residual replicates
        // the layer-1 output into every head lane.
        let base = g.layer_norm(x, r.ln2_gain, r.ln2_bias);
        let q = g.matmul(base, r.wq2);
        let k = g.matmul(base, r.wk2);
        let v = g.matmul(base, r.wv2);
        let mut lanes = Vec::with_capacity(h);
        for j in 0..h {
            let qh = g.cols(q, j * dh, dh);
            let kh = g.cols(k, j * dh, dh);
            let vh = g.cols(v, j * dh, dh);
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt);
            let scaled = g.scale(scores, scale);
            let attn = g.softmax(scaled);
            let oh = g.matmul(attn, vh);
            // Rows j*dh..(j+1)*dh of wo2 form this head's up-projection.
            let wo_t = g.transpose(r.wo2);
            let wo_cols = g.cols(wo_t, j * dh, dh);
            let wo_j = g.transpose(wo_cols);
            let up = g.matmul(oh, wo_j);
            lanes.push(g.add(x, up));
        }
        g.interleave_rows(&lanes)
    }

    /// Cross-attention fusion; returns `(out_node, per-head attention nodes)`.
    pub(crate) fn fuse_graph_with_probs(
        &self,
        g: &mut Graph,
        short: NodeId,
        long: NodeId,
    ) -> (NodeId, Vec<NodeId>) {
        let h = self.cross_heads;
        let dh = self.dim / h;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = g.matmul(short, self.w_q);
        let k = g.matmul(long, self.w_k);
        let v = g.matmul(long, self.w_v);
        let mut heads = Vec::with_capacity(h);
        let mut probs = Vec::with_capacity(h);
        for j in 0..h {
            let qh = g.cols(q, j * dh, dh);
            let kh = g.cols(k, j * dh, dh);
            let vh = g.cols(v, j * dh, dh);
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt);
            let scaled = g.scale(scores, scale);
            let attn = g.softmax(scaled);
            probs.push(attn);
            heads.push(g.matmul(attn, vh));
        }
        let cat = g.concat_cols(&heads);
        (g.add(cat, short), probs)
    }

    pub fn fuse_graph(&self, g: &mut Graph, short: NodeId, long: NodeId) -> NodeId {
        self.fuse_graph_with_probs(g, short, long).0
    }

    pub fn project_graph(&self, g: &mut Graph, z_prime: NodeId) -> NodeId {
        let y = g.matmul(z_prime, self.w_proj);
        g.add_row(y, self.b_proj)
    }

    /// Full conditioning path: refine both branches, fuse, project.
    pub fn condition_graph(
        &self,
        g: &mut Graph,
        long_class_tokens: NodeId,
        short_class_tokens: NodeId,
    ) -> NodeId {
        let long = self.refine_graph(g, long_class_tokens, Branch::Long);
        let short = self.refine_graph(g, short_class_tokens, Branch::Short);
        let z_prime = self.fuse_graph(g, short, long);
        self.project_graph(g, z_prime)
    }
}

/// Class tokens (index 0 of the token axis) of a frame selection, `N_t x D`.
pub fn class_tokens(selected: ArrayView3<'_, f64>) -> Array2<f64> {
    selected.index_axis(ndarray::Axis(1), 0).to_owned()
}

/// Refine a frame selection into term features.
pub fn refine_term(
    selected: ArrayView3<'_, f64>,
    branch: Branch,
    params: &FusionParams,
) -> Result<TermFeatures> {
    let (n_t, _p, d) = selected.dim();
    if d != params.config.dim {
        return Err(Error::config(format!(
            "feature dim {d} does not match fusion dim {}",
            params.config.dim
        )));
    }
    if selected.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("refine_term input contains non-finite values"));
    }
    let mut g = Graph::new();
    let nodes = FusionNodes::bind(&mut g, params);
    let ct = g.leaf(class_tokens(selected));
    let out = nodes.refine_graph(&mut g, ct, branch);
    TermFeatures::new(g.value(out).clone(), n_t, params.config.refiner_heads)
}

/// Cross-attention fusion of refined short and long features (`Z'`).
pub fn fuse(short: &TermFeatures, long: &TermFeatures, params: &FusionParams) -> Result<Array2<f64>> {
    let d = params.config.dim;
    if short.values.ncols() != d || long.values.ncols() != d {
        return Err(Error::config(format!(
            "term feature width must equal fusion dim {d}"
        )));
    }
    let mut g = Graph::new();
    let nodes = FusionNodes::bind(&mut g, params);
    let s = g.leaf(short.values.clone());
    let l = g.leaf(long.values.clone());
    let (out, probs) = nodes.fuse_graph_with_probs(&mut g, s, l);
    for (j, p) in probs.iter().enumerate() {
        let v = g.value(*p);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite attention weights in fusion head {j}; short rows {}, long rows {}",
                short.values.nrows(),
                long.values.nrows()
            )));
        }
    }
    Ok(g.value(out).clone())
}

/// Linear projection of `Z'` to the decoder conditioning width.
pub fn project(z_prime: &Array2<f64>, params: &FusionParams) -> Result<Conditioning> {
    if z_prime.ncols() != params.config.dim {
        return Err(Error::config(format!(
            "projection input width {} does not match fusion dim {}",
            z_prime.ncols(),
            params.config.dim
        )));
    }
    let mut g = Graph::new();
    let nodes = FusionNodes::bind(&mut g, params);
    let z = g.leaf(z_prime.clone());
    let out = nodes.project_graph(&mut g, z);
    Conditioning::new(g.value(out).clone())
}

/// Refine, fuse, and project a long/short frame-feature selection.
pub fn condition(
    long_sel: ArrayView3<'_, f64>,
    short_sel: ArrayView3<'_, f64>,
    params: &FusionParams,
) -> Result<Conditioning> {
    let short = refine_term(short_sel, Branch::Short, params)?;
    let long = refine_term(long_sel, Branch::Long, params)?;
    let z_prime = fuse(&short, &long, params)?;
    project(&z_prime, params)
}
