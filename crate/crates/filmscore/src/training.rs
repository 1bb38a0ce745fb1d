//! Teacher-forced training of the fusion + decoder stack.
//!
//! One optimizer owns every tensor of both parameter sets: AdamW
//! (decoupled weight decay) with clip-by-global-norm, a linear warm-up into
//! cosine decay schedule, and an EMA shadow of the parameters. A batch is a
//! set of (long selection, short selection, target tokens) triples; the loss
//! is mean cross-entropy over the scheduled content cells.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use crate::codec::{Codec, Waveform};
use crate::decoder::{
    schedule_cells, schedule_frames, DecoderNodes, DecoderParams, Pattern, TokenMatrix,
};
use crate::error::{Error, Result};
use crate::frontend::{encode_frames, select_long_short, FrameEncoder, VideoClip};
use crate::fusion::{class_tokens, FusionNodes, FusionParams};
use crate::nn::Graph;

/// Optimizer and schedule hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub peak_lr: f64,
    pub floor_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub ema_decay: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            peak_lr: 1e-3,
            floor_lr: 0.0,
            warmup_steps: 100,
            total_steps: 1000,
            beta1: 0.9,
            beta2: 0.95,
            weight_decay: 0.1,
            grad_clip: 1.0,
            ema_decay: 0.99,
            batch_size: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps >= self.total_steps {
            return Err(Error::config("warm-up steps must be < total steps"));
        }
        if self.peak_lr <= 0.0 || self.floor_lr < 0.0 {
            return Err(Error::config("learning rates must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("betas must be in (0, 1)"));
        }
        if self.grad_clip <= 0.0 || self.ema_decay <= 0.0 || self.ema_decay >= 1.0 {
            return Err(Error::config("invalid clip or EMA decay"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        Ok(())
    }
}

/// Linear warm-up to `peak_lr` over `warmup_steps`, then cosine decay to
/// `floor_lr` at `total_steps`. `lr(0) == 0`, `lr(warmup) == peak`,
/// `lr(total) == floor`.
pub fn lr_at(config: &TrainConfig, step: usize) -> f64 {
    if step < config.warmup_steps {
        return config.peak_lr * step as f64 / config.warmup_steps as f64;
    }
    let step = step.min(config.total_steps);
    let progress =
        (step - config.warmup_steps) as f64 / (config.total_steps - config.warmup_steps) as f64;
    config.floor_lr
        + 0.5 * (config.peak_lr - config.floor_lr) * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// One training example: frame-feature selections plus the aligned targets.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub long_sel: Array3<f64>,
    pub short_sel: Array3<f64>,
    pub target: TokenMatrix,
}

#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub items: Vec<BatchItem>,
}

/// Mean cross-entropy over unmasked `(codebook, step)` cells.
///
/// `logits` is `K x S x (V+1)` as produced by `forward_logits`; `mask` marks
/// filler/padding cells to exclude. Fails if every cell is masked.
pub fn loss(logits: &Array3<f64>, target: &TokenMatrix, mask: &Array2<bool>) -> Result<f64> {
    let (k, s, classes) = logits.dim();
    if target.codebooks() != k || target.steps() != s || mask.dim() != (k, s) {
        return Err(Error::config("loss shapes disagree"));
    }
    if target.vocab() as usize + 1 != classes {
        return Err(Error::config("logit class count != vocab + 1"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for kb in 0..k {
        for st in 0..s {
            if mask[[kb, st]] {
                continue;
            }
            let row = logits.slice(ndarray::s![kb, st, ..]);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
            total += lse - row[target.get(kb, st) as usize];
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyInput("loss over fully-masked target".into()));
    }
    Ok(total / count as f64)
}

/// Teacher-forced next-token accuracy over unmasked cells.
pub fn accuracy(logits: &Array3<f64>, target: &TokenMatrix, mask: &Array2<bool>) -> f64 {
    let (k, s, classes) = logits.dim();
    let mut hit = 0usize;
    let mut count = 0usize;
    for kb in 0..k {
        for st in 0..s {
            if mask[[kb, st]] {
                continue;
            }
            let row = logits.slice(ndarray::s![kb, st, ..]);
            let mut best = 0usize;
            for j in 1..classes {
                if row[j] > row[best] {
                    best = j;
                }
            }
            if best as u32 == target.get(kb, st) {
                hit += 1;
            }
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        hit as f64 / count as f64
    }
}

struct AdamW {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: usize,
}

impl AdamW {
    fn new(shapes: &[ndarray::Ix2]) -> Self {
        AdamW {
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            t: 0,
        }
    }

    /// One decoupled-weight-decay update. A batch whose gradient is exactly
    /// zero everywhere is a no-op for the parameters (weight decay included);
    /// only the EMA bookkeeping outside this call proceeds.
    fn apply(
        &mut self,
        params: &mut [&mut Array2<f64>],
        grads: &[Array2<f64>],
        lr: f64,
        cfg: &TrainConfig,
    ) {
        const EPS: f64 = 1e-8;
        let global_norm: f64 = grads
            .iter()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        if global_norm == 0.0 {
            return;
        }
        let scale = if global_norm > cfg.grad_clip {
            cfg.grad_clip / global_norm
        } else {
            1.0
        };
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(&mut **p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    let g = g * scale;
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * (mhat / (vhat.sqrt() + EPS) + cfg.weight_decay * *p);
                });
        }
    }
}

/// Exponential moving average of all trainable tensors.
pub struct EmaShadow {
    pub decay: f64,
    pub tensors: Vec<Array2<f64>>,
}

impl EmaShadow {
    fn new(init: Vec<Array2<f64>>, decay: f64) -> Self {
        EmaShadow {
            decay,
            tensors: init,
        }
    }

    fn update(&mut self, params: &[&Array2<f64>]) {
        for (shadow, p) in self.tensors.iter_mut().zip(params) {
            ndarray::Zip::from(shadow).and(*p).for_each(|s, &p| {
                *s = self.decay * *s + (1.0 - self.decay) * p;
            });
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

/// Gradients keyed by their tensor names.
pub type NamedGrads = Vec<(String, Array2<f64>)>;

/// Owns the parameters, optimizer state, and EMA shadow.
pub struct Trainer {
    pub fusion: FusionParams,
    pub decoder: DecoderParams,
    pub pattern: Pattern,
    pub config: TrainConfig,
    opt: AdamW,
    pub ema: EmaShadow,
    step: usize,
}

impl Trainer {
    pub fn new(
        fusion: FusionParams,
        decoder: DecoderParams,
        pattern: Pattern,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        if fusion.config.out_dim != decoder.config.hidden {
            return Err(Error::config(
                "fusion output width must equal decoder hidden width",
            ));
        }
        let shapes: Vec<ndarray::Ix2> = fusion
            .tensors()
            .iter()
            .chain(decoder.tensors().iter())
            .map(|(_, t)| t.raw_dim())
            .collect();
        let snapshot: Vec<Array2<f64>> = fusion
            .tensors()
            .iter()
            .chain(decoder.tensors().iter())
            .map(|(_, t)| (*t).clone())
            .collect();
        let decay = config.ema_decay;
        Ok(Trainer {
            fusion,
            decoder,
            pattern,
            config,
            opt: AdamW::new(&shapes),
            ema: EmaShadow::new(snapshot, decay),
            step: 0,
        })
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Build the teacher-forced graph for a batch; returns the scalar loss
    /// node plus bound parameter nodes.
    fn batch_graph(
        &self,
        g: &mut Graph,
        batch: &Batch,
    ) -> Result<(crate::nn::NodeId, FusionNodes, DecoderNodes)> {
        if batch.items.is_empty() {
            return Err(Error::EmptyInput("empty batch".into()));
        }
        let fnodes = FusionNodes::bind(g, &self.fusion);
        let dnodes = DecoderNodes::bind(g, &self.decoder);
        let special = self.decoder.special_id();
        let mut nll_nodes = Vec::new();
        let mut total_cells = 0usize;
        for item in &batch.items {
            let lt = g.leaf(class_tokens(item.long_sel.view()));
            let st = g.leaf(class_tokens(item.short_sel.view()));
            let z = fnodes.condition_graph(g, lt, st);
            let frames = schedule_frames(&item.target, self.pattern);
            let cells = schedule_cells(
                self.pattern,
                item.target.codebooks(),
                item.target.steps(),
            );
            let logits = dnodes.forward_graph(g, &frames, special, z);
            // Per-codebook schedule-position targets; None on filler slots.
            for (kb, &logit_node) in logits.iter().enumerate() {
                let targets: Vec<Option<usize>> = (0..frames.len())
                    .map(|t| {
                        cells[t]
                            .iter()
                            .find(|&&(c, _)| c == kb)
                            .map(|&(_, ts)| item.target.get(kb, ts) as usize)
                    })
                    .collect();
                total_cells += targets.iter().flatten().count();
                let lp = g.log_softmax(logit_node);
                nll_nodes.push(g.nll_sum(lp, Arc::new(targets)));
            }
        }
        if total_cells == 0 {
            return Err(Error::EmptyInput("loss over fully-masked target".into()));
        }
        let mut acc = nll_nodes[0];
        for &n in &nll_nodes[1..] {
            acc = g.add(acc, n);
        }
        let loss_node = g.scale(acc, 1.0 / total_cells as f64);
        Ok((loss_node, fnodes, dnodes))
    }

    /// Forward/backward on one batch, then clip, AdamW, EMA, in that order.
    pub fn train_step(&mut self, batch: &Batch) -> Result<StepStats> {
        let lr = lr_at(&self.config, self.step);
        let mut g = Graph::new();
        let (loss_node, fnodes, dnodes) = self.batch_graph(&mut g, batch)?;
        let loss_value = g.value(loss_node)[[0, 0]];
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss {loss_value} at step {}",
                self.step
            )));
        }
        g.backward(loss_node)?;
        let mut grads = fnodes.grads(&g);
        grads.extend(dnodes.grads(&g));
        let grad_norm: f64 = grads
            .iter()
            .map(|t| t.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt();

        {
            let mut params: Vec<&mut Array2<f64>> = Vec::new();
            for (_, t) in self.fusion.tensors_mut() {
                params.push(t);
            }
            for (_, t) in self.decoder.tensors_mut() {
                params.push(t);
            }
            self.opt.apply(&mut params, &grads, lr, &self.config);
        }
        {
            let params: Vec<&Array2<f64>> = self
                .fusion
                .tensors()
                .into_iter()
                .map(|(_, t)| t)
                .chain(self.decoder.tensors().into_iter().map(|(_, t)| t))
                .collect();
            self.ema.update(&params);
        }
        self.step += 1;
        Ok(StepStats {
            loss: loss_value,
            lr,
            grad_norm,
        })
    }

    /// Loss and gradient tensors for one batch without updating anything.
    pub fn eval_grads(&self, batch: &Batch) -> Result<(f64, NamedGrads)> {
        let mut g = Graph::new();
        let (loss_node, fnodes, dnodes) = self.batch_graph(&mut g, batch)?;
        let loss_value = g.value(loss_node)[[0, 0]];
        g.backward(loss_node)?;
        let names: Vec<String> = self
            .fusion
            .tensors()
            .iter()
            .map(|(n, _)| n.clone())
            .chain(self.decoder.tensors().iter().map(|(n, _)| n.clone()))
            .collect();
        let mut grads = fnodes.grads(&g);
        grads.extend(dnodes.grads(&g));
        Ok((loss_value, names.into_iter().zip(grads).collect()))
    }

    /// Teacher-forced accuracy of the current parameters on a batch.
    pub fn eval_accuracy(&self, batch: &Batch) -> Result<f64> {
        let mut hit = 0.0;
        let mut n = 0usize;
        for item in &batch.items {
            let z = crate::fusion::condition(
                item.long_sel.view(),
                item.short_sel.view(),
                &self.fusion,
            )?;
            let logits =
                crate::decoder::forward_logits(&item.target, &z, &self.decoder, self.pattern)?;
            let mask = Array2::from_elem(
                (item.target.codebooks(), item.target.steps()),
                false,
            );
            let cells = item.target.codebooks() * item.target.steps();
            hit += accuracy(&logits, &item.target, &mask) * cells as f64;
            n += cells;
        }
        Ok(hit / n as f64)
    }
}

/// Frame/selection parameters used when assembling batches.
#[derive(Debug, Clone)]
pub struct FrontendConfig {
    pub fps: f64,
    /// Long-term selection cap; the selection is `min(N, n_long_cap)` frames.
    pub n_long_cap: usize,
    /// Training window length in seconds.
    pub segment_s: f64,
}

/// Assemble a batch from paired clips and waveforms.
///
/// Targets come from `codec.encode`; the short window is a uniformly random
/// contiguous `segment_s` span (the whole clip when shorter), and the token
/// span is the same window scaled by the codec frame rate, so token step `s`
/// maps to video time `window_start + s / frame_rate`.
pub fn build_batch(
    pairs: &[(VideoClip, Waveform)],
    codec: &dyn Codec,
    encoder: &dyn FrameEncoder,
    frontend: &FrontendConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Batch> {
    let mut items = Vec::with_capacity(pairs.len());
    for (i, (clip, wave)) in pairs.iter().enumerate() {
        if (clip.duration_s - wave.duration_s()).abs() > 0.5 {
            return Err(Error::Pairing(format!(
                "pair {i}: video {:.2}s vs audio {:.2}s exceed 0.5s mismatch",
                clip.duration_s,
                wave.duration_s()
            )));
        }
        let features = encode_frames(clip, encoder)?;
        let tokens = codec.encode(wave)?;
        let frame_rate = codec.spec().frame_rate;
        let s_total = tokens.steps();
        let n = features.n_frames();

        let seg_tokens = ((frontend.segment_s * frame_rate).round() as usize)
            .clamp(1, s_total);
        let t0 = if seg_tokens >= s_total {
            0
        } else {
            rng.random_range(0..=s_total - seg_tokens)
        };
        let w0 = t0 as f64 / frame_rate;
        let w1 = (t0 + seg_tokens) as f64 / frame_rate;

        let f0 = ((w0 * frontend.fps).floor() as usize).min(n - 1);
        let f1 = ((w1 * frontend.fps - 1e-9).ceil() as usize).clamp(f0 + 1, n);
        let n_long = frontend.n_long_cap.clamp(1, n);
        let (long_sel, short_sel) = select_long_short(&features, n_long, f1 - f0, f0)?;
        let target = tokens.slice_steps(t0, t0 + seg_tokens)?;
        items.push(BatchItem {
            long_sel,
            short_sel,
            target,
        });
    }
    Ok(Batch { items })
}

/// Append one `step,loss,lr` line to a CSV training log, creating the file
/// (with header) on first use.
pub fn append_log(path: &std::path::Path, step: usize, loss_value: f64, lr: f64) -> Result<()> {
    use std::io::Write;
    let fresh = !path.exists();
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    if fresh {
        writeln!(file, "step,loss,lr")?;
    }
    writeln!(file, "{step},{loss_value},{lr}")?;
    Ok(())
}
