//! Embedding and classifier adapters for evaluation, with deterministic
//! offline stubs.
//!
//! The stub embedder projects a fixed per-segment statistics vector of the
//! waveform through a seeded random matrix, so distinct audio content maps to
//! distinct embeddings while identical files always agree. Real extractors
//! (audio-tagging networks, contrastive audio encoders) plug in behind the
//! same traits.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::Waveform;
use crate::error::Result;

pub trait AudioEmbedder {
    fn dim(&self) -> usize;
    fn embed(&self, wave: &Waveform) -> Result<Vec<f64>>;
}

pub trait AudioClassifier {
    fn n_classes(&self) -> usize;
    /// Class probabilities on the simplex.
    fn predict(&self, wave: &Waveform) -> Result<Vec<f64>>;
}

const SEGMENTS: usize = 8;
const STATS_PER_SEGMENT: usize = 4;

/// Per-segment RMS, mean absolute first difference, min, max.
fn stats_vector(wave: &Waveform) -> Vec<f64> {
    let n = wave.samples.len().max(1);
    let seg = n.div_ceil(SEGMENTS);
    let mut stats = Vec::with_capacity(SEGMENTS * STATS_PER_SEGMENT);
    for s in 0..SEGMENTS {
        let lo = (s * seg).min(n);
        let hi = ((s + 1) * seg).min(n);
        let chunk = &wave.samples[lo..hi];
        if chunk.is_empty() {
            stats.extend_from_slice(&[0.0; STATS_PER_SEGMENT]);
            continue;
        }
        let rms = (chunk.iter().map(|x| x * x).sum::<f64>() / chunk.len() as f64).sqrt();
        let diff = chunk
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .sum::<f64>()
            / chunk.len().max(1) as f64;
        let min = chunk.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        stats.extend_from_slice(&[rms, diff, min, max]);
    }
    stats
}

/// Seeded random projection of waveform statistics.
pub struct HashProjectionEmbedder {
    dim: usize,
    projection: Vec<Vec<f64>>,
}

impl HashProjectionEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = SEGMENTS * STATS_PER_SEGMENT;
        let projection = (0..dim)
            .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        HashProjectionEmbedder { dim, projection }
    }
}

impl AudioEmbedder for HashProjectionEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, wave: &Waveform) -> Result<Vec<f64>> {
        let stats = stats_vector(wave);
        Ok(self
            .projection
            .iter()
            .map(|row| row.iter().zip(&stats).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// Seeded projection followed by a softmax: a stand-in multi-label tagger.
pub struct HashProjectionClassifier {
    inner: HashProjectionEmbedder,
}

impl HashProjectionClassifier {
    pub fn new(n_classes: usize, seed: u64) -> Self {
        HashProjectionClassifier {
            inner: HashProjectionEmbedder::new(n_classes, seed),
        }
    }
}

impl AudioClassifier for HashProjectionClassifier {
    fn n_classes(&self) -> usize {
        self.inner.dim
    }

    fn predict(&self, wave: &Waveform) -> Result<Vec<f64>> {
        let logits = self.inner.embed(wave)?;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        Ok(exp.into_iter().map(|e| e / total).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, n: usize) -> Waveform {
        let samples = (0..n)
            .map(|i| 0.4 * (2.0 * std::f64::consts::PI * freq * i as f64 / 8000.0).sin())
            .collect();
        Waveform::new(samples, 8000).unwrap()
    }

    #[test]
    fn embedder_is_deterministic_and_content_sensitive() {
        let e = HashProjectionEmbedder::new(16, 9);
        let a = e.embed(&tone(440.0, 8000)).unwrap();
        let b = e.embed(&tone(440.0, 8000)).unwrap();
        let c = e.embed(&tone(660.0, 8000)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn classifier_rows_are_on_the_simplex() {
        let c = HashProjectionClassifier::new(8, 3);
        let p = c.predict(&tone(220.0, 4000)).unwrap();
        assert_eq!(p.len(), 8);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
    }
}
