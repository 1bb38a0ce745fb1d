//! Top-k sampling over a logit vector.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Sample an index from the `k` largest logits.
///
/// Probabilities are proportional to `softmax(logits / temperature)`
/// renormalized over the top-k set. Ties in logit value are broken toward
/// the lower index when selecting the set, so the outcome is a pure function
/// of `(logits, k, temperature, rng state)`.
pub fn sample_topk<R: Rng>(
    logits: &[f64],
    k: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<usize> {
    if k == 0 {
        return Err(Error::config("top-k requires k >= 1"));
    }
    if temperature <= 0.0 {
        return Err(Error::config("temperature must be positive"));
    }
    if logits.iter().any(|l| l.is_nan()) {
        return Err(Error::numeric("NaN logit in sampler"));
    }
    let mut order: Vec<usize> = (0..logits.len())
        .filter(|&i| logits[i] > f64::NEG_INFINITY)
        .collect();
    if order.is_empty() {
        return Err(Error::numeric("all logits are -inf"));
    }
    order.sort_by(|&a, &b| {
        logits[b]
            .partial_cmp(&logits[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order.truncate(k);

    let max = logits[order[0]];
    let weights: Vec<f64> = order
        .iter()
        .map(|&i| ((logits[i] - max) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (idx, w) in order.iter().zip(&weights) {
        u -= w;
        if u <= 0.0 {
            return Ok(*idx);
        }
    }
    Ok(*order.last().unwrap())
}

/// [`sample_topk`] driven by a fresh seeded generator.
pub fn sample_topk_seeded(logits: &[f64], k: usize, temperature: f64, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_topk(logits, k, temperature, &mut rng)
}
