//! Run configuration shared by the CLI commands.
//!
//! A single TOML document with per-module sections; every field is validated
//! against its module's preconditions at load time. CLI flags override file
//! values, file values override the defaults below.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::codec::StubCodec;
use crate::decoder::{DecoderConfig, Pattern};
use crate::error::{Error, Result};
use crate::frontend::{FrameEncoder, MeanPoolEncoder, StubFrameEncoder};
use crate::fusion::FusionConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendSection {
    pub fps: f64,
    /// Training/short-term window length in seconds.
    pub segment_s: f64,
    pub n_long_cap: usize,
    /// `stub` (seeded random projection) or `meanpool`.
    pub encoder: String,
    pub patch_grid: usize,
    pub feature_dim: usize,
    pub encoder_seed: u64,
}

impl Default for FrontendSection {
    fn default() -> Self {
        FrontendSection {
            fps: 2.0,
            segment_s: 30.0,
            n_long_cap: 64,
            encoder: "stub".into(),
            patch_grid: 2,
            feature_dim: 16,
            encoder_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionSection {
    pub refiner_heads: usize,
    pub cross_heads: usize,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection {
            refiner_heads: 2,
            cross_heads: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_mult: usize,
    pub pattern: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: 64,
            layers: 2,
            heads: 4,
            ff_mult: 4,
            pattern: "delay".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecSection {
    pub sample_rate: u32,
    pub frame_rate: f64,
    pub codebooks: usize,
    pub vocab: u32,
}

impl Default for CodecSection {
    fn default() -> Self {
        CodecSection {
            sample_rate: 32000,
            frame_rate: 50.0,
            codebooks: 4,
            vocab: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingSection {
    pub top_k: usize,
    pub temperature: f64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            top_k: 250,
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceSection {
    pub window_s: f64,
    pub overlap_s: f64,
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection {
            window_s: 30.0,
            overlap_s: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSection {
    pub peak_lr: f64,
    pub floor_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub ema_decay: f64,
    /// Optional second corpus chained after the primary manifest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra_manifest: Option<String>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            peak_lr: 1e-3,
            floor_lr: 0.0,
            warmup_steps: 100,
            total_steps: 1000,
            batch_size: 8,
            beta1: 0.9,
            beta2: 0.95,
            weight_decay: 0.1,
            grad_clip: 1.0,
            ema_decay: 0.99,
            extra_manifest: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub frontend: FrontendSection,
    pub fusion: FusionSection,
    pub model: ModelSection,
    pub codec: CodecSection,
    pub sampling: SamplingSection,
    pub inference: InferenceSection,
    pub training: TrainingSection,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// FNV-1a hash of the canonical serialization; recorded in sidecars so
    /// two runs are comparable.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_toml().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        format!("{h:016x}")
    }

    pub fn validate(&self) -> Result<()> {
        if self.frontend.fps <= 0.0 || self.frontend.segment_s <= 0.0 {
            return Err(Error::config("frontend fps and segment must be positive"));
        }
        if self.frontend.n_long_cap == 0 || self.frontend.patch_grid == 0 {
            return Err(Error::config("frontend dims must be positive"));
        }
        match self.frontend.encoder.as_str() {
            "stub" | "meanpool" => {}
            other => return Err(Error::config(format!("unknown encoder '{other}'"))),
        }
        self.fusion_config().validate()?;
        self.decoder_config().validate()?;
        Pattern::parse(&self.model.pattern)?;
        // The codec constructor enforces its own invariants.
        self.build_codec()?;
        if self.sampling.top_k == 0 || self.sampling.temperature <= 0.0 {
            return Err(Error::config("sampling needs top_k >= 1, temperature > 0"));
        }
        if self.inference.overlap_s <= 0.0 || self.inference.overlap_s >= self.inference.window_s {
            return Err(Error::config("inference overlap must satisfy 0 < O < window"));
        }
        self.train_config().validate()?;
        Ok(())
    }

    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            dim: self.frontend.feature_dim,
            refiner_heads: self.fusion.refiner_heads,
            cross_heads: self.fusion.cross_heads,
            out_dim: self.model.hidden,
        }
    }

    pub fn decoder_config(&self) -> DecoderConfig {
        DecoderConfig {
            n_layers: self.model.layers,
            hidden: self.model.hidden,
            n_heads: self.model.heads,
            ff_mult: self.model.ff_mult,
            vocab: self.codec.vocab,
            codebooks: self.codec.codebooks,
        }
    }

    pub fn pattern(&self) -> Pattern {
        Pattern::parse(&self.model.pattern).expect("validated pattern")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            peak_lr: self.training.peak_lr,
            floor_lr: self.training.floor_lr,
            warmup_steps: self.training.warmup_steps,
            total_steps: self.training.total_steps,
            beta1: self.training.beta1,
            beta2: self.training.beta2,
            weight_decay: self.training.weight_decay,
            grad_clip: self.training.grad_clip,
            ema_decay: self.training.ema_decay,
            batch_size: self.training.batch_size,
        }
    }

    pub fn build_codec(&self) -> Result<StubCodec> {
        StubCodec::new(
            self.codec.sample_rate,
            self.codec.frame_rate,
            self.codec.codebooks,
            self.codec.vocab,
        )
    }

    pub fn build_encoder(&self, channels: usize) -> Box<dyn FrameEncoder> {
        match self.frontend.encoder.as_str() {
            "meanpool" => Box::new(MeanPoolEncoder::new(self.frontend.patch_grid, channels)),
            _ => Box::new(StubFrameEncoder::new(
                self.frontend.patch_grid,
                self.frontend.feature_dim,
                self.frontend.encoder_seed,
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn paper_operating_point_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.frontend.fps, 2.0);
        assert_eq!(cfg.frontend.segment_s, 30.0);
        assert_eq!(cfg.sampling.top_k, 250);
        assert_eq!(cfg.sampling.temperature, 1.0);
        assert_eq!(cfg.inference.window_s, 30.0);
        assert_eq!(cfg.inference.overlap_s, 5.0);
        assert_eq!(cfg.model.pattern, "delay");
        assert_eq!(cfg.codec.sample_rate, 32000);
        assert_eq!(cfg.training.beta1, 0.9);
        assert_eq!(cfg.training.beta2, 0.95);
        assert_eq!(cfg.training.weight_decay, 0.1);
        assert_eq!(cfg.training.grad_clip, 1.0);
        assert_eq!(cfg.training.ema_decay, 0.99);
    }

    #[test]
    fn invalid_fields_are_rejected_at_load() {
        let bad = "[inference]\nwindow_s = 10.0\noverlap_s = 10.0\n";
        assert!(RunConfig::from_toml(bad).is_err());
        let bad = "[model]\nhidden = 30\nheads = 4\n";
        assert!(RunConfig::from_toml(bad).is_err());
        let bad = "[frontend]\nencoder = \"resnet\"\n";
        assert!(RunConfig::from_toml(bad).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig {
            seed: 7,
            ..RunConfig::default()
        };
        assert_ne!(a.hash(), b.hash());
    }
}
