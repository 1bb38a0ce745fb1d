//! Codebook interleaving patterns.
//!
//! A pattern arranges the `K x S` token grid into a 1-D autoregressive
//! schedule. Each schedule step carries a fixed layout of slots; a slot is
//! either a content cell `(codebook, timestep)` or a filler position that
//! must hold the reserved special id.
//!
//! - `parallel`: `S` steps, each carrying all `K` codebooks of one timestep.
//! - `flatten`: `K*S` single-slot steps, timestep-major and codebook-minor.
//! - `delay`: `S + K - 1` steps; codebook `k` is shifted right by `k` steps,
//!   fillers padding the leading/trailing triangles.
//! - `vall_e`: codebook 0 fully first (`S` single-slot steps), then `S`
//!   steps each carrying codebooks `1..K` of one timestep.

use super::TokenMatrix;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Parallel = 0,
    Flatten = 1,
    Delay = 2,
    VallE = 3,
}

impl Pattern {
    pub fn from_tag(tag: u8) -> Result<Pattern> {
        match tag {
            0 => Ok(Pattern::Parallel),
            1 => Ok(Pattern::Flatten),
            2 => Ok(Pattern::Delay),
            3 => Ok(Pattern::VallE),
            other => Err(Error::Format(format!("unknown pattern tag {other}"))),
        }
    }

    pub fn parse(name: &str) -> Result<Pattern> {
        match name {
            "parallel" => Ok(Pattern::Parallel),
            "flatten" => Ok(Pattern::Flatten),
            "delay" => Ok(Pattern::Delay),
            "vall_e" | "valle" => Ok(Pattern::VallE),
            other => Err(Error::config(format!("unknown pattern '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Pattern::Parallel => "parallel",
            Pattern::Flatten => "flatten",
            Pattern::Delay => "delay",
            Pattern::VallE => "vall_e",
        }
    }
}

/// Number of schedule steps for a `K x S` grid.
pub fn schedule_len(pattern: Pattern, k: usize, s: usize) -> usize {
    match pattern {
        Pattern::Parallel => s,
        Pattern::Flatten => k * s,
        Pattern::Delay => s + k - 1,
        Pattern::VallE => {
            if k == 1 {
                s
            } else {
                2 * s
            }
        }
    }
}

/// Slot layout of one schedule step: for every slot, the codebook it belongs
/// to and `Some(timestep)` when it is a content cell (`None` = filler).
pub fn step_layout(
    pattern: Pattern,
    k: usize,
    s: usize,
    step: usize,
) -> Vec<(usize, Option<usize>)> {
    match pattern {
        Pattern::Parallel => (0..k).map(|kb| (kb, Some(step))).collect(),
        Pattern::Flatten => vec![(step % k, Some(step / k))],
        Pattern::Delay => (0..k)
            .map(|kb| {
                let t = step as i64 - kb as i64;
                if t >= 0 && (t as usize) < s {
                    (kb, Some(t as usize))
                } else {
                    (kb, None)
                }
            })
            .collect(),
        Pattern::VallE => {
            if k == 1 || step < s {
                vec![(0, Some(step))]
            } else {
                (1..k).map(|kb| (kb, Some(step - s))).collect()
            }
        }
    }
}

/// Content cells per schedule step: `cells[step]` lists `(codebook, timestep)`.
pub fn schedule_cells(pattern: Pattern, k: usize, s: usize) -> Vec<Vec<(usize, usize)>> {
    (0..schedule_len(pattern, k, s))
        .map(|step| {
            step_layout(pattern, k, s, step)
                .into_iter()
                .filter_map(|(kb, t)| t.map(|t| (kb, t)))
                .collect()
        })
        .collect()
}

/// Token frames, one per schedule step: frame `t` has `K` slots where slot
/// `kb` holds the content token scheduled there or the special filler id.
pub fn schedule_frames(y: &TokenMatrix, pattern: Pattern) -> Vec<Vec<u32>> {
    let (k, s) = (y.codebooks(), y.steps());
    let filler = y.special_id();
    (0..schedule_len(pattern, k, s))
        .map(|step| {
            let mut frame = vec![filler; k];
            for (kb, t) in step_layout(pattern, k, s, step) {
                if let Some(t) = t {
                    frame[kb] = y.get(kb, t);
                }
            }
            frame
        })
        .collect()
}

/// A token matrix arranged as a flat 1-D sequence under a pattern.
///
/// The flat stream is the concatenation over schedule steps of each step's
/// slot values in slot order; filler slots carry the special id and are
/// position-determined, so de-interleaving is exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterleavedSequence {
    pub ids: Vec<u32>,
    pub pattern: Pattern,
    pub codebooks: usize,
    pub steps: usize,
    pub vocab: u32,
}

/// Arrange a token matrix into its flat interleaved sequence.
pub fn interleave(y: &TokenMatrix, pattern: Pattern) -> InterleavedSequence {
    let (k, s) = (y.codebooks(), y.steps());
    let filler = y.special_id();
    let mut ids = Vec::new();
    for step in 0..schedule_len(pattern, k, s) {
        for (kb, t) in step_layout(pattern, k, s, step) {
            ids.push(match t {
                Some(t) => y.get(kb, t),
                None => filler,
            });
        }
    }
    InterleavedSequence {
        ids,
        pattern,
        codebooks: k,
        steps: s,
        vocab: y.vocab(),
    }
}

/// Invert [`interleave`]; `deinterleave(interleave(y, p)) == y` for all
/// valid `y` and `p`.
pub fn deinterleave(seq: &InterleavedSequence) -> Result<TokenMatrix> {
    let (k, s) = (seq.codebooks, seq.steps);
    if k == 0 || s == 0 {
        return Err(Error::Format("empty interleaved sequence".into()));
    }
    let filler = seq.vocab;
    let expected_len: usize = (0..schedule_len(seq.pattern, k, s))
        .map(|step| step_layout(seq.pattern, k, s, step).len())
        .sum();
    if seq.ids.len() != expected_len {
        return Err(Error::Format(format!(
            "sequence length {} inconsistent with (K={k}, S={s}, {}): expected {expected_len}",
            seq.ids.len(),
            seq.pattern.name()
        )));
    }
    let mut tokens = ndarray::Array2::zeros((k, s));
    let mut seen = vec![vec![false; s]; k];
    let mut pos = 0usize;
    for step in 0..schedule_len(seq.pattern, k, s) {
        for (kb, t) in step_layout(seq.pattern, k, s, step) {
            let id = seq.ids[pos];
            pos += 1;
            match t {
                Some(t) => {
                    tokens[[kb, t]] = id;
                    seen[kb][t] = true;
                }
                None => {
                    if id != filler {
                        return Err(Error::Format(format!(
                            "expected filler at step {step} slot {kb}, found id {id}"
                        )));
                    }
                }
            }
        }
    }
    debug_assert!(seen.iter().all(|row| row.iter().all(|&b| b)));
    TokenMatrix::new(tokens, seq.vocab)
}
