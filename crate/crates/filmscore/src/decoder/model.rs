//! The autoregressive token decoder.
//!
//! A pre-norm transformer over schedule steps: causal self-attention, then
//! cross-attention over the fused visual conditioning, then an MLP, repeated
//! per layer. Every schedule step carries `K` token slots; the step input is
//! the sum of the `K` per-codebook embeddings of the *previous* step's slots
//! (a shared special id seeds step 0) plus a sinusoidal position encoding,
//! and `K` output heads predict the current step's slots.
//!
//! Two forward paths share the same parameters: an incremental one with
//! key/value caches for generation ([`DecoderState`]), and a graph-building
//! one for training ([`DecoderNodes::forward_graph`]). Tests pin them to each
//! other and to a scalar reference implementation.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use super::pattern::{schedule_cells, schedule_frames, schedule_len, Pattern};
use super::sampling::sample_topk;
use super::TokenMatrix;
use crate::error::{Error, Result};
use crate::fusion::Conditioning;
use crate::nn::{attention, Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub n_layers: usize,
    /// Hidden width `M`.
    pub hidden: usize,
    pub n_heads: usize,
    /// MLP inner width as a multiple of `hidden`.
    pub ff_mult: usize,
    /// Per-codebook vocabulary `V`; id `V` is the reserved special token.
    pub vocab: u32,
    /// Codebook count `K`.
    pub codebooks: usize,
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.hidden == 0 || self.ff_mult == 0 {
            return Err(Error::config("decoder dims must be positive"));
        }
        if self.n_heads == 0 || !self.hidden.is_multiple_of(self.n_heads) {
            return Err(Error::config(format!(
                "head count {} must divide hidden width {}",
                self.n_heads, self.hidden
            )));
        }
        if self.vocab == 0 || self.codebooks == 0 {
            return Err(Error::config("vocab and codebook count must be positive"));
        }
        Ok(())
    }

    fn classes(&self) -> usize {
        self.vocab as usize + 1
    }
}

#[derive(Debug, Clone)]
pub struct LayerParams {
    pub ln1_gain: Array2<f64>,
    pub ln1_bias: Array2<f64>,
    pub sa_wq: Array2<f64>,
    pub sa_wk: Array2<f64>,
    pub sa_wv: Array2<f64>,
    pub sa_wo: Array2<f64>,
    pub ln2_gain: Array2<f64>,
    pub ln2_bias: Array2<f64>,
    pub ca_wq: Array2<f64>,
    pub ca_wk: Array2<f64>,
    pub ca_wv: Array2<f64>,
    pub ca_wo: Array2<f64>,
    pub ln3_gain: Array2<f64>,
    pub ln3_bias: Array2<f64>,
    pub mlp_w1: Array2<f64>,
    pub mlp_b1: Array2<f64>,
    pub mlp_w2: Array2<f64>,
    pub mlp_b2: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct DecoderParams {
    pub config: DecoderConfig,
    /// `K` embedding tables of shape `(V+1) x M`.
    pub embed: Vec<Array2<f64>>,
    pub layers: Vec<LayerParams>,
    pub lnf_gain: Array2<f64>,
    pub lnf_bias: Array2<f64>,
    /// `K` output heads of shape `M x (V+1)` plus row biases.
    pub heads_w: Vec<Array2<f64>>,
    pub heads_b: Vec<Array2<f64>>,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl DecoderParams {
    pub fn init(config: DecoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = config.hidden;
        let f = m * config.ff_mult;
        let classes = config.classes();
        let embed = (0..config.codebooks)
            .map(|_| xavier(&mut rng, classes, m))
            .collect();
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                ln1_gain: Array2::ones((1, m)),
                ln1_bias: Array2::zeros((1, m)),
                sa_wq: xavier(&mut rng, m, m),
                sa_wk: xavier(&mut rng, m, m),
                sa_wv: xavier(&mut rng, m, m),
                sa_wo: xavier(&mut rng, m, m),
                ln2_gain: Array2::ones((1, m)),
                ln2_bias: Array2::zeros((1, m)),
                ca_wq: xavier(&mut rng, m, m),
                ca_wk: xavier(&mut rng, m, m),
                ca_wv: xavier(&mut rng, m, m),
                ca_wo: xavier(&mut rng, m, m),
                ln3_gain: Array2::ones((1, m)),
                ln3_bias: Array2::zeros((1, m)),
                mlp_w1: xavier(&mut rng, m, f),
                mlp_b1: Array2::zeros((1, f)),
                mlp_w2: xavier(&mut rng, f, m),
                mlp_b2: Array2::zeros((1, m)),
            })
            .collect();
        Ok(DecoderParams {
            embed,
            layers,
            lnf_gain: Array2::ones((1, m)),
            lnf_bias: Array2::zeros((1, m)),
            heads_w: (0..config.codebooks)
                .map(|_| xavier(&mut rng, m, classes))
                .collect(),
            heads_b: (0..config.codebooks)
                .map(|_| Array2::zeros((1, classes)))
                .collect(),
            config,
        })
    }

    pub fn special_id(&self) -> u32 {
        self.config.vocab
    }

    /// Named tensors in a stable order (shared with [`DecoderNodes::grads`]).
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        for (k, e) in self.embed.iter().enumerate() {
            out.push((format!("decoder.embed.{k}"), e));
        }
        for (i, l) in self.layers.iter().enumerate() {
            for (name, t) in layer_fields(l) {
                out.push((format!("decoder.layer{i}.{name}"), t));
            }
        }
        out.push(("decoder.lnf_gain".into(), &self.lnf_gain));
        out.push(("decoder.lnf_bias".into(), &self.lnf_bias));
        for (k, w) in self.heads_w.iter().enumerate() {
            out.push((format!("decoder.head{k}.w"), w));
        }
        for (k, b) in self.heads_b.iter().enumerate() {
            out.push((format!("decoder.head{k}.b"), b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = Vec::new();
        for (k, e) in self.embed.iter_mut().enumerate() {
            out.push((format!("decoder.embed.{k}"), e));
        }
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (name, t) in layer_fields_mut(l) {
                out.push((format!("decoder.layer{i}.{name}"), t));
            }
        }
        out.push(("decoder.lnf_gain".into(), &mut self.lnf_gain));
        out.push(("decoder.lnf_bias".into(), &mut self.lnf_bias));
        for (k, w) in self.heads_w.iter_mut().enumerate() {
            out.push((format!("decoder.head{k}.w"), w));
        }
        for (k, b) in self.heads_b.iter_mut().enumerate() {
            out.push((format!("decoder.head{k}.b"), b));
        }
        out
    }
}

fn layer_fields(l: &LayerParams) -> Vec<(&'static str, &Array2<f64>)> {
    vec![
        ("ln1_gain", &l.ln1_gain),
        ("ln1_bias", &l.ln1_bias),
        ("sa_wq", &l.sa_wq),
        ("sa_wk", &l.sa_wk),
        ("sa_wv", &l.sa_wv),
        ("sa_wo", &l.sa_wo),
        ("ln2_gain", &l.ln2_gain),
        ("ln2_bias", &l.ln2_bias),
        ("ca_wq", &l.ca_wq),
        ("ca_wk", &l.ca_wk),
        ("ca_wv", &l.ca_wv),
        ("ca_wo", &l.ca_wo),
        ("ln3_gain", &l.ln3_gain),
        ("ln3_bias", &l.ln3_bias),
        ("mlp_w1", &l.mlp_w1),
        ("mlp_b1", &l.mlp_b1),
        ("mlp_w2", &l.mlp_w2),
        ("mlp_b2", &l.mlp_b2),
    ]
}

fn layer_fields_mut(l: &mut LayerParams) -> Vec<(&'static str, &mut Array2<f64>)> {
    vec![
        ("ln1_gain", &mut l.ln1_gain),
        ("ln1_bias", &mut l.ln1_bias),
        ("sa_wq", &mut l.sa_wq),
        ("sa_wk", &mut l.sa_wk),
        ("sa_wv", &mut l.sa_wv),
        ("sa_wo", &mut l.sa_wo),
        ("ln2_gain", &mut l.ln2_gain),
        ("ln2_bias", &mut l.ln2_bias),
        ("ca_wq", &mut l.ca_wq),
        ("ca_wk", &mut l.ca_wk),
        ("ca_wv", &mut l.ca_wv),
        ("ca_wo", &mut l.ca_wo),
        ("ln3_gain", &mut l.ln3_gain),
        ("ln3_bias", &mut l.ln3_bias),
        ("mlp_w1", &mut l.mlp_w1),
        ("mlp_b1", &mut l.mlp_b1),
        ("mlp_w2", &mut l.mlp_w2),
        ("mlp_b2", &mut l.mlp_b2),
    ]
}

/// Sinusoidal position encoding row.
fn position_row(pos: usize, m: usize) -> Vec<f64> {
    let mut row = vec![0.0; m];
    let mut i = 0;
    while i < m {
        let exponent = i as f64 / m as f64;
        let rate = 1.0 / 10000f64.powf(exponent);
        row[i] = (pos as f64 * rate).sin();
        if i + 1 < m {
            row[i + 1] = (pos as f64 * rate).cos();
        }
        i += 2;
    }
    row
}

fn layer_norm_row(x: &[f64], gain: &Array2<f64>, bias: &Array2<f64>) -> Vec<f64> {
    let d = x.len() as f64;
    let mu = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / d;
    let sd = (var + 1e-5).sqrt();
    x.iter()
        .enumerate()
        .map(|(j, &v)| (v - mu) / sd * gain[[0, j]] + bias[[0, j]])
        .collect()
}

fn vecmat(x: &[f64], w: &Array2<f64>) -> Vec<f64> {
    let (rows, cols) = w.dim();
    debug_assert_eq!(rows, x.len());
    let mut out = vec![0.0; cols];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for j in 0..cols {
            out[j] += xi * w[[i, j]];
        }
    }
    out
}

/// Incremental decoding state: per-layer self-attention caches plus the
/// conditioning keys/values, which are computed once.
pub struct DecoderState {
    z_k: Vec<Array2<f64>>,
    z_v: Vec<Array2<f64>>,
    self_k: Vec<Vec<Vec<f64>>>,
    self_v: Vec<Vec<Vec<f64>>>,
    pos: usize,
}

impl DecoderState {
    pub fn new(params: &DecoderParams, z: &Conditioning) -> Result<Self> {
        if z.width() != params.config.hidden {
            return Err(Error::config(format!(
                "conditioning width {} does not match decoder hidden {}",
                z.width(),
                params.config.hidden
            )));
        }
        let z_k = params
            .layers
            .iter()
            .map(|l| z.values.dot(&l.ca_wk))
            .collect();
        let z_v = params
            .layers
            .iter()
            .map(|l| z.values.dot(&l.ca_wv))
            .collect();
        Ok(DecoderState {
            z_k,
            z_v,
            self_k: vec![Vec::new(); params.layers.len()],
            self_v: vec![Vec::new(); params.layers.len()],
            pos: 0,
        })
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    /// Advance one schedule step: embed `frame` (the previous step's slots),
    /// run all layers, and return per-codebook logits for the current step.
    pub fn step(&mut self, params: &DecoderParams, frame: &[u32]) -> Result<Vec<Vec<f64>>> {
        let cfg = &params.config;
        if frame.len() != cfg.codebooks {
            return Err(Error::config("frame slot count != K"));
        }
        let m = cfg.hidden;
        let n_heads = cfg.n_heads;
        let dh = m / n_heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut x = position_row(self.pos, m);
        for (k, &id) in frame.iter().enumerate() {
            let row = params.embed[k].row(id as usize);
            for j in 0..m {
                x[j] += row[j];
            }
        }

        for (li, layer) in params.layers.iter().enumerate() {
            // Causal self-attention over the cache (including this position).
            let xn = layer_norm_row(&x, &layer.ln1_gain, &layer.ln1_bias);
            let q = vecmat(&xn, &layer.sa_wq);
            let k_row = vecmat(&xn, &layer.sa_wk);
            let v_row = vecmat(&xn, &layer.sa_wv);
            self.self_k[li].push(k_row);
            self.self_v[li].push(v_row);
            let cache_k = &self.self_k[li];
            let cache_v = &self.self_v[li];
            let mut cat = vec![0.0; m];
            for h in 0..n_heads {
                let qs = &q[h * dh..(h + 1) * dh];
                let mut scores: Vec<f64> = cache_k
                    .iter()
                    .map(|kr| {
                        let ks = &kr[h * dh..(h + 1) * dh];
                        qs.iter().zip(ks).map(|(a, b)| a * b).sum::<f64>() * scale
                    })
                    .collect();
                softmax_inplace(&mut scores);
                for (w, vr) in scores.iter().zip(cache_v.iter()) {
                    let vs = &vr[h * dh..(h + 1) * dh];
                    for d in 0..dh {
                        cat[h * dh + d] += w * vs[d];
                    }
                }
            }
            let sa = vecmat(&cat, &layer.sa_wo);
            for j in 0..m {
                x[j] += sa[j];
            }

            // Cross-attention over the conditioning rows.
            let xn = layer_norm_row(&x, &layer.ln2_gain, &layer.ln2_bias);
            let q = vecmat(&xn, &layer.ca_wq);
            let zk = &self.z_k[li];
            let zv = &self.z_v[li];
            let mut cat = vec![0.0; m];
            for h in 0..n_heads {
                let qs = &q[h * dh..(h + 1) * dh];
                let mut scores: Vec<f64> = (0..zk.nrows())
                    .map(|r| {
                        let mut s = 0.0;
                        for d in 0..dh {
                            s += qs[d] * zk[[r, h * dh + d]];
                        }
                        s * scale
                    })
                    .collect();
                softmax_inplace(&mut scores);
                for (r, w) in scores.iter().enumerate() {
                    for d in 0..dh {
                        cat[h * dh + d] += w * zv[[r, h * dh + d]];
                    }
                }
            }
            let ca = vecmat(&cat, &layer.ca_wo);
            for j in 0..m {
                x[j] += ca[j];
            }

            // MLP.
            let xn = layer_norm_row(&x, &layer.ln3_gain, &layer.ln3_bias);
            let mut hid = vecmat(&xn, &layer.mlp_w1);
            for (j, h) in hid.iter_mut().enumerate() {
                *h = crate::nn::gelu_tanh(*h + layer.mlp_b1[[0, j]]);
            }
            let mut out = vecmat(&hid, &layer.mlp_w2);
            for j in 0..m {
                out[j] += layer.mlp_b2[[0, j]];
                x[j] += out[j];
            }
        }

        let xf = layer_norm_row(&x, &params.lnf_gain, &params.lnf_bias);
        let logits = (0..cfg.codebooks)
            .map(|k| {
                let mut l = vecmat(&xf, &params.heads_w[k]);
                for (j, v) in l.iter_mut().enumerate() {
                    *v += params.heads_b[k][[0, j]];
                }
                l
            })
            .collect();
        self.pos += 1;
        Ok(logits)
    }
}

fn softmax_inplace(scores: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        denom += *s;
    }
    for s in scores.iter_mut() {
        *s /= denom;
    }
}

/// Full-prefix logits for every cell of `prefix` under `pattern`.
///
/// Returns `K x S x (V+1)`: entry `(k, s, .)` is the logit vector the model
/// assigns to cell `(k, s)` at its schedule position, i.e. conditioned on
/// all schedule steps before it and on `z`. Deterministic.
pub fn forward_logits(
    prefix: &TokenMatrix,
    z: &Conditioning,
    params: &DecoderParams,
    pattern: Pattern,
) -> Result<Array3<f64>> {
    let cfg = &params.config;
    if prefix.codebooks() != cfg.codebooks || prefix.vocab() != cfg.vocab {
        return Err(Error::config("prefix does not match decoder (K, V)"));
    }
    let (k, s) = (prefix.codebooks(), prefix.steps());
    let frames = schedule_frames(prefix, pattern);
    let cells = schedule_cells(pattern, k, s);
    let t_total = schedule_len(pattern, k, s);
    let special = params.special_id();

    let mut state = DecoderState::new(params, z)?;
    let mut out = Array3::zeros((k, s, cfg.classes()));
    let start = vec![special; k];
    for t in 0..t_total {
        let input = if t == 0 { &start } else { &frames[t - 1] };
        let logits = state.step(params, input)?;
        for &(kb, ts) in &cells[t] {
            for (j, &v) in logits[kb].iter().enumerate() {
                out[[kb, ts, j]] = v;
            }
        }
    }
    Ok(out)
}

/// Autoregressively generate `n_steps` new timesteps (after the optional
/// prompt, which is teacher-forced without consuming randomness).
///
/// Returns the full `K x (prompt_len + n_steps)` matrix including the prompt
/// columns. The special filler id is masked out of sampling, so generated
/// content ids are always `< V`. Fixed `(seed, inputs)` give identical
/// output.
#[allow(clippy::too_many_arguments)]
pub fn generate(
    z: &Conditioning,
    n_steps: usize,
    params: &DecoderParams,
    pattern: Pattern,
    top_k: usize,
    temperature: f64,
    seed: u64,
    prompt: Option<&TokenMatrix>,
) -> Result<TokenMatrix> {
    let cfg = &params.config;
    if n_steps == 0 {
        return Err(Error::config("n_steps must be >= 1"));
    }
    if let Some(p) = prompt {
        if p.codebooks() != cfg.codebooks || p.vocab() != cfg.vocab {
            return Err(Error::config("prompt does not match decoder (K, V)"));
        }
    }
    let k = cfg.codebooks;
    let prompt_len = prompt.map_or(0, |p| p.steps());
    let s_total = prompt_len + n_steps;
    let cells = schedule_cells(pattern, k, s_total);
    let t_total = schedule_len(pattern, k, s_total);
    let special = params.special_id();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = DecoderState::new(params, z)?;
    let mut tokens = Array2::from_elem((k, s_total), special);
    let mut prev_frame = vec![special; k];
    for step_cells in cells.iter().take(t_total) {
        let logits = state.step(params, &prev_frame)?;
        // Fill this step's slots: forced from the prompt or sampled.
        let mut frame = vec![special; k];
        for &(kb, ts) in step_cells {
            let id = if ts < prompt_len {
                prompt.unwrap().get(kb, ts)
            } else {
                let mut l = logits[kb].clone();
                l[special as usize] = f64::NEG_INFINITY;
                sample_topk(&l, top_k, temperature, &mut rng)? as u32
            };
            tokens[[kb, ts]] = id;
            frame[kb] = id;
        }
        prev_frame = frame;
    }
    TokenMatrix::new(tokens, cfg.vocab)
}

struct LayerNodes {
    ln1_gain: NodeId,
    ln1_bias: NodeId,
    sa_wq: NodeId,
    sa_wk: NodeId,
    sa_wv: NodeId,
    sa_wo: NodeId,
    ln2_gain: NodeId,
    ln2_bias: NodeId,
    ca_wq: NodeId,
    ca_wk: NodeId,
    ca_wv: NodeId,
    ca_wo: NodeId,
    ln3_gain: NodeId,
    ln3_bias: NodeId,
    mlp_w1: NodeId,
    mlp_b1: NodeId,
    mlp_w2: NodeId,
    mlp_b2: NodeId,
}

/// Decoder parameters bound into a training graph.
pub struct DecoderNodes {
    embed: Vec<NodeId>,
    layers: Vec<LayerNodes>,
    lnf_gain: NodeId,
    lnf_bias: NodeId,
    heads_w: Vec<NodeId>,
    heads_b: Vec<NodeId>,
    n_heads: usize,
    hidden: usize,
}

impl DecoderNodes {
    pub fn bind(g: &mut Graph, params: &DecoderParams) -> Self {
        DecoderNodes {
            embed: params.embed.iter().map(|e| g.leaf(e.clone())).collect(),
            layers: params
                .layers
                .iter()
                .map(|l| LayerNodes {
                    ln1_gain: g.leaf(l.ln1_gain.clone()),
                    ln1_bias: g.leaf(l.ln1_bias.clone()),
                    sa_wq: g.leaf(l.sa_wq.clone()),
                    sa_wk: g.leaf(l.sa_wk.clone()),
                    sa_wv: g.leaf(l.sa_wv.clone()),
                    sa_wo: g.leaf(l.sa_wo.clone()),
                    ln2_gain: g.leaf(l.ln2_gain.clone()),
                    ln2_bias: g.leaf(l.ln2_bias.clone()),
                    ca_wq: g.leaf(l.ca_wq.clone()),
                    ca_wk: g.leaf(l.ca_wk.clone()),
                    ca_wv: g.leaf(l.ca_wv.clone()),
                    ca_wo: g.leaf(l.ca_wo.clone()),
                    ln3_gain: g.leaf(l.ln3_gain.clone()),
                    ln3_bias: g.leaf(l.ln3_bias.clone()),
                    mlp_w1: g.leaf(l.mlp_w1.clone()),
                    mlp_b1: g.leaf(l.mlp_b1.clone()),
                    mlp_w2: g.leaf(l.mlp_w2.clone()),
                    mlp_b2: g.leaf(l.mlp_b2.clone()),
                })
                .collect(),
            lnf_gain: g.leaf(params.lnf_gain.clone()),
            lnf_bias: g.leaf(params.lnf_bias.clone()),
            heads_w: params.heads_w.iter().map(|w| g.leaf(w.clone())).collect(),
            heads_b: params.heads_b.iter().map(|b| g.leaf(b.clone())).collect(),
            n_heads: params.config.n_heads,
            hidden: params.config.hidden,
        }
    }

    /// Gradients in [`DecoderParams::tensors`] order.
    pub fn grads(&self, g: &Graph) -> Vec<Array2<f64>> {
        let mut out = Vec::new();
        for e in &self.embed {
            out.push(g.grad(*e));
        }
        for l in &self.layers {
            for id in [
                l.ln1_gain, l.ln1_bias, l.sa_wq, l.sa_wk, l.sa_wv, l.sa_wo, l.ln2_gain,
                l.ln2_bias, l.ca_wq, l.ca_wk, l.ca_wv, l.ca_wo, l.ln3_gain, l.ln3_bias,
                l.mlp_w1, l.mlp_b1, l.mlp_w2, l.mlp_b2,
            ] {
                out.push(g.grad(id));
            }
        }
        out.push(g.grad(self.lnf_gain));
        out.push(g.grad(self.lnf_bias));
        for w in &self.heads_w {
            out.push(g.grad(*w));
        }
        for b in &self.heads_b {
            out.push(g.grad(*b));
        }
        out
    }

    /// Teacher-forced forward over `frames` (T schedule steps of K slots).
    ///
    /// Returns per-codebook logit nodes of shape `T x (V+1)`; row `t`
    /// predicts `frames[t]` (inputs are the frames shifted right by one with
    /// a special start frame).
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        frames: &[Vec<u32>],
        special: u32,
        z: NodeId,
    ) -> Vec<NodeId> {
        let t_total = frames.len();
        let k = self.embed.len();
        let m = self.hidden;
        let ids: Vec<Vec<usize>> = (0..k)
            .map(|kb| {
                (0..t_total)
                    .map(|t| {
                        if t == 0 {
                            special as usize
                        } else {
                            frames[t - 1][kb] as usize
                        }
                    })
                    .collect()
            })
            .collect();
        let x0 = g.embed_sum(&self.embed, Arc::new(ids));
        let pos = Array2::from_shape_fn((t_total, m), |(t, j)| position_row(t, m)[j]);
        let posn = g.leaf(pos);
        let mut x = g.add(x0, posn);

        for l in &self.layers {
            let xn = g.layer_norm(x, l.ln1_gain, l.ln1_bias);
            let sa = attention(
                g,
                xn,
                xn,
                l.sa_wq,
                l.sa_wk,
                l.sa_wv,
                Some(l.sa_wo),
                self.n_heads,
                true,
            );
            x = g.add(x, sa);

            let xn = g.layer_norm(x, l.ln2_gain, l.ln2_bias);
            let ca = attention(
                g,
                xn,
                z,
                l.ca_wq,
                l.ca_wk,
                l.ca_wv,
                Some(l.ca_wo),
                self.n_heads,
                false,
            );
            x = g.add(x, ca);

            let xn = g.layer_norm(x, l.ln3_gain, l.ln3_bias);
            let h1 = g.matmul(xn, l.mlp_w1);
            let h1b = g.add_row(h1, l.mlp_b1);
            let act = g.gelu(h1b);
            let h2 = g.matmul(act, l.mlp_w2);
            let h2b = g.add_row(h2, l.mlp_b2);
            x = g.add(x, h2b);
        }

        let xf = g.layer_norm(x, self.lnf_gain, self.lnf_bias);
        (0..k)
            .map(|kb| {
                let y = g.matmul(xf, self.heads_w[kb]);
                g.add_row(y, self.heads_b[kb])
            })
            .collect()
    }
}
