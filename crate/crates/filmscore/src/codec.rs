//! Waveform/token conversion: the codec adapter contract, a deterministic
//! reference codec, and WAV file I/O.
//!
//! The reference [`StubCodec`] splits each analysis frame into `K` band
//! sub-signals with matched cosine/sine filters at fixed DFT bins (integer
//! cycles per frame, so carriers are phase-continuous across frames) and
//! mu-law quantizes each band amplitude into one token. Decoding synthesizes
//! the carriers back. Per-band amplitudes are budgeted at `1/K` so any token
//! matrix decodes within `[-1, 1]` without clipping, which keeps the token
//! side exactly idempotent: `encode(decode(y)) == y`.
//!
//! Signals representable by the codec are exactly those band-limited to its
//! carrier set; round trips on such tones are quantization-limited (well
//! above 20 dB SNR at the default vocabulary).

use std::path::Path;

use ndarray::Array2;

use crate::decoder::TokenMatrix;
use crate::error::{Error, Result};

/// Mono audio samples in `[-1, 1]` at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite() || s.abs() > 1.0 + 1e-9) {
            return Err(Error::numeric(
                "waveform samples must be finite and within [-1, 1]",
            ));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn silence(n: usize, sample_rate: u32) -> Waveform {
        Waveform {
            samples: vec![0.0; n],
            sample_rate,
        }
    }
}

/// Static description of a codec's token geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecSpec {
    pub codebooks: usize,
    pub vocab: u32,
    /// Tokens per second per codebook.
    pub frame_rate: f64,
    pub sample_rate: u32,
}

/// Bidirectional waveform <-> token adapter.
pub trait Codec {
    fn spec(&self) -> CodecSpec;

    fn encode(&self, wave: &Waveform) -> Result<TokenMatrix>;

    fn decode(&self, tokens: &TokenMatrix) -> Result<Waveform>;
}

const MU: f64 = 255.0;

/// Deterministic band-split mu-law codec.
pub struct StubCodec {
    spec: CodecSpec,
    /// Samples per frame.
    frame_len: usize,
    /// DFT bin per band pair; row `2p` is the cosine phase of `bins[p]`,
    /// row `2p+1` the sine phase.
    bins: Vec<usize>,
}

impl StubCodec {
    /// Default band layout: bins `4 + 5p` (i.e. `(4 + 5p) * frame_rate` Hz).
    pub fn new(sample_rate: u32, frame_rate: f64, codebooks: usize, vocab: u32) -> Result<Self> {
        let pairs = codebooks.div_ceil(2);
        let bins = (0..pairs).map(|p| 4 + 5 * p).collect();
        Self::with_bins(sample_rate, frame_rate, codebooks, vocab, bins)
    }

    /// Custom band layout; `bins[p]` must satisfy `1 <= bin < frame_len/2`.
    pub fn with_bins(
        sample_rate: u32,
        frame_rate: f64,
        codebooks: usize,
        vocab: u32,
        bins: Vec<usize>,
    ) -> Result<Self> {
        if codebooks == 0 {
            return Err(Error::config("codec needs at least one codebook"));
        }
        if vocab < 2 {
            return Err(Error::config("codec vocab must be >= 2"));
        }
        if frame_rate <= 0.0 {
            return Err(Error::config("frame rate must be positive"));
        }
        let frame_len_f = sample_rate as f64 / frame_rate;
        let frame_len = frame_len_f.round() as usize;
        if frame_len == 0 || (frame_len_f - frame_len as f64).abs() > 1e-9 {
            return Err(Error::config(format!(
                "sample rate {sample_rate} is not an integer multiple of frame rate {frame_rate}"
            )));
        }
        if bins.len() != codebooks.div_ceil(2) {
            return Err(Error::config(format!(
                "need {} band bins for {codebooks} codebooks, got {}",
                codebooks.div_ceil(2),
                bins.len()
            )));
        }
        for &b in &bins {
            if b < 1 || 2 * b >= frame_len {
                return Err(Error::config(format!(
                    "band bin {b} outside (0, {})",
                    frame_len / 2
                )));
            }
        }
        Ok(StubCodec {
            spec: CodecSpec {
                codebooks,
                vocab,
                frame_rate,
                sample_rate,
            },
            frame_len,
            bins,
        })
    }

    fn amp_budget(&self) -> f64 {
        1.0 / self.spec.codebooks as f64
    }

    fn positive_levels(&self) -> u32 {
        (self.spec.vocab - 1).div_ceil(2)
    }

    fn negative_levels(&self) -> u32 {
        (self.spec.vocab - 1) / 2
    }

    fn carrier(&self, row: usize, n: usize) -> f64 {
        let bin = self.bins[row / 2] as f64;
        let phase = 2.0 * std::f64::consts::PI * bin * n as f64 / self.frame_len as f64;
        if row.is_multiple_of(2) {
            phase.cos()
        } else {
            phase.sin()
        }
    }

    /// Mu-law compress an amplitude into a token id (zig-zag sign layout:
    /// id 0 is zero, odd ids positive, even ids negative).
    fn quantize(&self, amp: f64) -> u32 {
        let budget = self.amp_budget();
        let a = amp.clamp(-budget, budget);
        let mag = (a.abs() / budget).min(1.0);
        let l_pos = self.positive_levels();
        let compressed = (1.0 + MU * mag).ln() / (1.0 + MU).ln();
        let mut level = (compressed * l_pos as f64).round() as u32;
        if level == 0 {
            return 0;
        }
        if a > 0.0 {
            2 * level - 1
        } else {
            level = level.min(self.negative_levels());
            if level == 0 {
                0
            } else {
                2 * level
            }
        }
    }

    fn dequantize(&self, id: u32) -> f64 {
        if id == 0 {
            return 0.0;
        }
        let l_pos = self.positive_levels();
        let (sign, level) = if id % 2 == 1 {
            (1.0, id.div_ceil(2))
        } else {
            (-1.0, id / 2)
        };
        let y = level as f64 / l_pos as f64;
        let mag = ((1.0 + MU).powf(y) - 1.0) / MU;
        sign * mag * self.amp_budget()
    }
}

impl Codec for StubCodec {
    fn spec(&self) -> CodecSpec {
        self.spec
    }

    /// Per frame and band: correlate with the matched carrier, quantize.
    /// A trailing partial frame (less than one frame of samples) is dropped,
    /// so `S == floor(duration * frame_rate)`.
    fn encode(&self, wave: &Waveform) -> Result<TokenMatrix> {
        if wave.sample_rate != self.spec.sample_rate {
            return Err(Error::config(format!(
                "waveform rate {} != codec rate {}",
                wave.sample_rate, self.spec.sample_rate
            )));
        }
        let f = self.frame_len;
        let s = wave.samples.len() / f;
        if s == 0 {
            return Err(Error::EmptyInput(
                "waveform shorter than one codec frame".into(),
            ));
        }
        let k = self.spec.codebooks;
        let mut tokens = Array2::zeros((k, s));
        for t in 0..s {
            let frame = &wave.samples[t * f..(t + 1) * f];
            for row in 0..k {
                let mut corr = 0.0;
                for (n, &x) in frame.iter().enumerate() {
                    corr += x * self.carrier(row, n);
                }
                let amp = 2.0 * corr / f as f64;
                tokens[[row, t]] = self.quantize(amp);
            }
        }
        TokenMatrix::new(tokens, self.spec.vocab)
    }

    fn decode(&self, tokens: &TokenMatrix) -> Result<Waveform> {
        if tokens.codebooks() != self.spec.codebooks || tokens.vocab() != self.spec.vocab {
            return Err(Error::config("token matrix does not match codec spec"));
        }
        if let Some(bad) = tokens.tokens().iter().find(|&&t| t >= self.spec.vocab) {
            return Err(Error::Format(format!(
                "token id {bad} is not decodable (vocab {})",
                self.spec.vocab
            )));
        }
        let f = self.frame_len;
        let s = tokens.steps();
        let mut samples = vec![0.0f64; s * f];
        for t in 0..s {
            for row in 0..self.spec.codebooks {
                let amp = self.dequantize(tokens.get(row, t));
                if amp == 0.0 {
                    continue;
                }
                for n in 0..f {
                    samples[t * f + n] += amp * self.carrier(row, n);
                }
            }
        }
        Waveform::new(samples, self.spec.sample_rate)
    }
}

/// Signal-to-noise ratio of `test` against `reference`, in dB.
pub fn snr_db(reference: &[f64], test: &[f64]) -> f64 {
    let n = reference.len().min(test.len());
    let sig: f64 = reference[..n].iter().map(|x| x * x).sum();
    let noise: f64 = reference[..n]
        .iter()
        .zip(&test[..n])
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if noise == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (sig / noise).log10()
}

/// Write 16-bit PCM mono WAV.
pub fn write_wav(path: &Path, wave: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for &s in &wave.samples {
        let v = (s * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
        writer
            .write_sample(v)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    writer.finalize().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

/// Read 16-bit PCM mono WAV.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 {
        return Err(Error::Format(format!(
            "{}: expected 16-bit mono PCM, got {} ch / {} bit",
            path.display(),
            spec.channels,
            spec.bits_per_sample
        )));
    }
    let samples: Vec<f64> = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(e.to_string()))?;
    Waveform::new(samples, spec.sample_rate)
}
