//! Autoregressive codec-token decoding: interleaving patterns, the
//! transformer decoder with cross-attention conditioning, and top-k sampling.

mod model;
mod pattern;
mod sampling;

pub use model::{DecoderConfig, DecoderNodes, DecoderParams, DecoderState, forward_logits, generate};
pub use pattern::{
    deinterleave, interleave, schedule_cells, schedule_frames, schedule_len, InterleavedSequence,
    Pattern,
};
pub use sampling::{sample_topk, sample_topk_seeded};

use ndarray::Array2;

use crate::error::{Error, Result};

/// A `K x S` grid of codec token ids.
///
/// Entries are in `[0, vocab)` or equal to the reserved special id
/// [`TokenMatrix::special_id`] (`== vocab`), which serves as the shared
/// start/filler/padding token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMatrix {
    tokens: Array2<u32>,
    vocab: u32,
}

impl TokenMatrix {
    pub fn new(tokens: Array2<u32>, vocab: u32) -> Result<Self> {
        if tokens.nrows() == 0 || tokens.ncols() == 0 {
            return Err(Error::config("token matrix must have K, S >= 1"));
        }
        if vocab == 0 {
            return Err(Error::config("vocab must be positive"));
        }
        if let Some(bad) = tokens.iter().find(|&&t| t > vocab) {
            return Err(Error::Format(format!(
                "token id {bad} outside [0, {vocab}]"
            )));
        }
        Ok(TokenMatrix { tokens, vocab })
    }

    pub fn codebooks(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn steps(&self) -> usize {
        self.tokens.ncols()
    }

    pub fn vocab(&self) -> u32 {
        self.vocab
    }

    /// The reserved start/filler id (one past the last real token).
    pub fn special_id(&self) -> u32 {
        self.vocab
    }

    pub fn get(&self, codebook: usize, step: usize) -> u32 {
        self.tokens[[codebook, step]]
    }

    pub fn tokens(&self) -> &Array2<u32> {
        &self.tokens
    }

    /// Columns `[start, end)` as a new matrix.
    pub fn slice_steps(&self, start: usize, end: usize) -> Result<TokenMatrix> {
        if start >= end || end > self.steps() {
            return Err(Error::Index(format!(
                "token slice [{start}, {end}) out of range for {} steps",
                self.steps()
            )));
        }
        Ok(TokenMatrix {
            tokens: self.tokens.slice(ndarray::s![.., start..end]).to_owned(),
            vocab: self.vocab,
        })
    }

    /// Concatenate along the step axis.
    pub fn concat_steps(&self, other: &TokenMatrix) -> Result<TokenMatrix> {
        if other.codebooks() != self.codebooks() || other.vocab != self.vocab {
            return Err(Error::config("token matrices disagree on K or vocab"));
        }
        let tokens = ndarray::concatenate(
            ndarray::Axis(1),
            &[self.tokens.view(), other.tokens.view()],
        )
        .expect("concat shapes checked");
        Ok(TokenMatrix {
            tokens,
            vocab: self.vocab,
        })
    }

    /// Serialize to the documented byte layout:
    ///
    /// ```text
    /// magic  "FSTM"          4 bytes
    /// version u16 LE         (currently 1)
    /// pattern u8             (0 parallel, 1 flatten, 2 delay, 3 vall-e)
    /// k       u32 LE
    /// s       u64 LE
    /// vocab   u32 LE
    /// tokens  k*s u32 LE, row-major (codebook-major)
    /// ```
    pub fn to_bytes(&self, pattern: Pattern) -> Vec<u8> {
        let mut out = Vec::with_capacity(23 + self.tokens.len() * 4);
        out.extend_from_slice(b"FSTM");
        out.extend_from_slice(&1u16.to_le_bytes());
        out.push(pattern as u8);
        out.extend_from_slice(&(self.codebooks() as u32).to_le_bytes());
        out.extend_from_slice(&(self.steps() as u64).to_le_bytes());
        out.extend_from_slice(&self.vocab.to_le_bytes());
        for row in self.tokens.rows() {
            for &t in row {
                out.extend_from_slice(&t.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(TokenMatrix, Pattern)> {
        if bytes.len() < 23 || &bytes[0..4] != b"FSTM" {
            return Err(Error::Format("bad token matrix header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != 1 {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let pattern = Pattern::from_tag(bytes[6])?;
        let k = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
        let s = u64::from_le_bytes(bytes[11..19].try_into().unwrap()) as usize;
        let vocab = u32::from_le_bytes(bytes[19..23].try_into().unwrap());
        let need = 23 + k * s * 4;
        if bytes.len() != need {
            return Err(Error::Format(format!(
                "token payload length {} != expected {need}",
                bytes.len()
            )));
        }
        let mut tokens = Array2::zeros((k, s));
        let mut off = 23;
        for kb in 0..k {
            for st in 0..s {
                tokens[[kb, st]] =
                    u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
                off += 4;
            }
        }
        Ok((TokenMatrix::new(tokens, vocab)?, pattern))
    }
}
