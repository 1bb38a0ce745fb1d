//! Adapter contracts for the curation pipeline plus deterministic stubs:
//! a band-energy music tagger, an FIR band-stop source separator, and a
//! hash-projection audio/video embedder. The stubs keep the whole pipeline
//! runnable offline; production models plug in behind the same traits.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::Waveform;
use crate::error::{Error, Result};
use crate::frontend::VideoClip;

/// Frame-level music-probability tagger.
pub trait MusicTagger {
    /// Seconds between probability frames.
    fn frame_hop_s(&self) -> f64;
    /// One music probability in `[0, 1]` per frame.
    fn music_probs(&self, wave: &Waveform) -> Result<Vec<f64>>;
}

/// Vocal/accompaniment source separation; returns the accompaniment stem.
pub trait SourceSeparator {
    fn separate(&self, wave: &Waveform) -> Result<Waveform>;
}

/// Joint audio-visual embedder for alignment scoring.
pub trait AvEmbedder {
    fn dim(&self) -> usize;
    fn embed_video(&self, clip: &VideoClip) -> Result<Vec<f64>>;
    fn embed_audio(&self, wave: &Waveform) -> Result<Vec<f64>>;
}

/// Windowed-sinc (Blackman) low-pass taps with cutoff `fc` (normalized to
/// the sample rate), `taps` odd.
fn lowpass_taps(fc: f64, taps: usize) -> Vec<f64> {
    let m = (taps - 1) as f64;
    let mut h = vec![0.0; taps];
    let mut sum = 0.0;
    for (n, v) in h.iter_mut().enumerate() {
        let x = n as f64 - m / 2.0;
        let sinc = if x == 0.0 {
            2.0 * fc
        } else {
            (2.0 * std::f64::consts::PI * fc * x).sin() / (std::f64::consts::PI * x)
        };
        let w = 0.42 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / m).cos()
            + 0.08 * (4.0 * std::f64::consts::PI * n as f64 / m).cos();
        *v = sinc * w;
        sum += *v;
    }
    for v in h.iter_mut() {
        *v /= sum;
    }
    h
}

/// Band-pass taps as a difference of two low-passes.
fn bandpass_taps(f_lo: f64, f_hi: f64, sample_rate: f64, taps: usize) -> Vec<f64> {
    let lp_hi = lowpass_taps(f_hi / sample_rate, taps);
    let lp_lo = lowpass_taps(f_lo / sample_rate, taps);
    lp_hi
        .iter()
        .zip(&lp_lo)
        .map(|(a, b)| a - b)
        .collect()
}

/// Same-length convolution with zero-padded edges.
fn convolve_same(x: &[f64], h: &[f64]) -> Vec<f64> {
    let half = h.len() / 2;
    let mut y = vec![0.0; x.len()];
    for (i, out) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (t, &coeff) in h.iter().enumerate() {
            let idx = i as i64 + t as i64 - half as i64;
            if idx >= 0 && (idx as usize) < x.len() {
                acc += coeff * x[idx as usize];
            }
        }
        *out = acc;
    }
    y
}

/// Music probability as the in-band energy fraction per hop.
pub struct BandEnergyTagger {
    pub hop_s: f64,
    pub band_hz: (f64, f64),
    pub taps: usize,
}

impl Default for BandEnergyTagger {
    fn default() -> Self {
        BandEnergyTagger {
            hop_s: 0.5,
            band_hz: (100.0, 4000.0),
            taps: 301,
        }
    }
}

impl MusicTagger for BandEnergyTagger {
    fn frame_hop_s(&self) -> f64 {
        self.hop_s
    }

    fn music_probs(&self, wave: &Waveform) -> Result<Vec<f64>> {
        if wave.samples.is_empty() {
            return Err(Error::EmptyInput("tagger received empty audio".into()));
        }
        let sr = wave.sample_rate as f64;
        let f_hi = self.band_hz.1.min(0.45 * sr);
        let taps = bandpass_taps(self.band_hz.0, f_hi, sr, self.taps);
        let banded = convolve_same(&wave.samples, &taps);
        let hop = ((self.hop_s * sr).round() as usize).max(1);
        let n_frames = wave.samples.len().div_ceil(hop);
        let mut probs = Vec::with_capacity(n_frames);
        for f in 0..n_frames {
            let lo = f * hop;
            let hi = ((f + 1) * hop).min(wave.samples.len());
            let total: f64 = wave.samples[lo..hi].iter().map(|x| x * x).sum();
            let band: f64 = banded[lo..hi].iter().map(|x| x * x).sum();
            probs.push((band / (total + 1e-12)).clamp(0.0, 1.0));
        }
        Ok(probs)
    }
}

/// Accompaniment stem via an FIR band-stop over the declared vocal band.
pub struct BandStopSeparator {
    pub vocal_band_hz: (f64, f64),
    pub taps: usize,
}

impl Default for BandStopSeparator {
    fn default() -> Self {
        BandStopSeparator {
            vocal_band_hz: (500.0, 4000.0),
            taps: 401,
        }
    }
}

impl SourceSeparator for BandStopSeparator {
    fn separate(&self, wave: &Waveform) -> Result<Waveform> {
        let sr = wave.sample_rate as f64;
        let f_hi = self.vocal_band_hz.1.min(0.45 * sr);
        let taps = bandpass_taps(self.vocal_band_hz.0, f_hi, sr, self.taps);
        let vocal = convolve_same(&wave.samples, &taps);
        let samples: Vec<f64> = wave
            .samples
            .iter()
            .zip(&vocal)
            .map(|(x, v)| (x - v).clamp(-1.0, 1.0))
            .collect();
        Waveform::new(samples, wave.sample_rate)
    }
}

/// Deterministic audio/video embedder: fixed content statistics through a
/// seeded projection, normalized to the unit sphere.
pub struct HashProjectionAv {
    dim: usize,
    seed: u64,
}

impl HashProjectionAv {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashProjectionAv { dim, seed }
    }

    fn project(&self, stats: &[f64], salt: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ salt);
        let mut out = vec![0.0; self.dim];
        for &s in stats {
            for o in out.iter_mut() {
                *o += s * rng.random_range(-1.0..1.0);
            }
        }
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for o in out.iter_mut() {
                *o /= norm;
            }
        } else {
            out[0] = 1.0;
        }
        out
    }
}

impl AvEmbedder for HashProjectionAv {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_video(&self, clip: &VideoClip) -> Result<Vec<f64>> {
        let n = clip.n_frames();
        let chunks = 8usize;
        let mut stats = Vec::with_capacity(chunks * 2);
        for c in 0..chunks {
            let lo = c * n / chunks;
            let hi = (((c + 1) * n) / chunks).max(lo + 1).min(n);
            let mut mean = 0.0f64;
            let mut count = 0.0f64;
            for f in lo..hi {
                for v in clip.frame(f).iter() {
                    mean += *v as f64;
                    count += 1.0;
                }
            }
            mean /= count.max(1.0);
            let mut var = 0.0;
            for f in lo..hi {
                for v in clip.frame(f).iter() {
                    var += (*v as f64 - mean) * (*v as f64 - mean);
                }
            }
            stats.push(mean);
            stats.push((var / count.max(1.0)).sqrt());
        }
        Ok(self.project(&stats, 0x5649_4445)) // "VIDE"
    }

    fn embed_audio(&self, wave: &Waveform) -> Result<Vec<f64>> {
        let n = wave.samples.len().max(1);
        let chunks = 8usize;
        let mut stats = Vec::with_capacity(chunks * 2);
        for c in 0..chunks {
            let lo = c * n / chunks;
            let hi = (((c + 1) * n) / chunks).max(lo + 1).min(n);
            let chunk = &wave.samples[lo..hi.max(lo + 1).min(n)];
            let rms =
                (chunk.iter().map(|x| x * x).sum::<f64>() / chunk.len().max(1) as f64).sqrt();
            let zc = chunk
                .windows(2)
                .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
                .count() as f64
                / chunk.len().max(1) as f64;
            stats.push(rms);
            stats.push(zc);
        }
        Ok(self.project(&stats, 0x4155_4449)) // "AUDI"
    }
}
