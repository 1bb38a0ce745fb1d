//! Video-conditioned music generation at desk scale.
//!
//! The crate covers the full path from a video file to a music waveform and
//! back through evaluation:
//!
//! - [`frontend`]: frame sampling, pluggable frame encoders, long/short
//!   frame selection.
//! - [`fusion`]: long/short-term feature refinement and cross-attention
//!   fusion into decoder conditioning.
//! - [`decoder`]: codebook interleaving patterns and the autoregressive
//!   token decoder with top-k sampling.
//! - [`codec`]: waveform/token conversion with a deterministic reference
//!   codec and WAV I/O.
//! - [`training`]: teacher-forced training with AdamW, cosine schedule,
//!   gradient clipping and EMA.
//! - [`inference`]: sliding-window long-form generation.
//! - [`metrics`]: Frechet distances, prediction KL, density/coverage,
//!   alignment score and average-rank aggregation.
//! - [`curation`]: the dataset filtering/ranking pipeline over JSONL
//!   manifests.
//! - [`config`]: run configuration shared by the CLI commands.

pub mod checkpoint;
pub mod codec;
pub mod config;
pub mod curation;
pub mod decoder;
pub mod error;
pub mod frontend;
pub mod fusion;
pub mod inference;
pub mod metrics;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
