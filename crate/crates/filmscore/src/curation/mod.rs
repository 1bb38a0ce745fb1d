//! Dataset curation: coarse rule filters, content filters, source
//! separation, alignment ranking, and split assignment over a JSONL
//! manifest.
//!
//! Manifest format, one JSON object per line:
//!
//! ```json
//! {"id": "clip01", "video": "clips/clip01.y4m", "audio": "clips/clip01.wav",
//!  "duration_s": 95.0, "category": "Documentary",
//!  "stages": {"coarse": {"pass": true}}, "alignment_score": 0.42,
//!  "split": "finetune"}
//! ```
//!
//! Stages run in order `coarse -> music_event -> static_video -> separation`,
//! then alignment ranking assigns splits. A record failing a stage keeps
//! exactly that one rejection and never reaches a split. Re-running the
//! pipeline on its own output reproduces it byte for byte.

pub mod adapters;
pub mod filters;
mod pipeline;
pub mod ssim;

pub use adapters::{
    AvEmbedder, BandEnergyTagger, BandStopSeparator, HashProjectionAv, MusicTagger,
    SourceSeparator,
};
pub use filters::{coarse_filter, music_event_filter, static_video_filter};
pub use pipeline::{
    finalize_bench, rank_and_split, run_pipeline, run_pipeline_file, separate_music, Adapters,
    PipelineOutcome,
};
pub use ssim::{ssim, ssim_map};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Outcome of one pipeline stage for one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageVerdict {
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

/// Split assignment after ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Pretrain,
    Finetune,
    BenchCandidate,
    Bench,
}

/// One video-audio pair flowing through the pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MediaRecord {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub video: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub audio: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub duration_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub stages: BTreeMap<String, StageVerdict>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alignment_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub split: Option<Split>,
}

impl MediaRecord {
    /// True when no recorded stage failed.
    pub fn all_passed(&self) -> bool {
        self.stages.values().all(|v| v.pass)
    }

    pub fn first_failure(&self) -> Option<(&str, &StageVerdict)> {
        self.stages
            .iter()
            .find(|(_, v)| !v.pass)
            .map(|(k, v)| (k.as_str(), v))
    }
}

/// Thresholds and knobs for the whole pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CurateConfig {
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub blocked_categories: Vec<String>,
    /// Frame music-probability threshold (strictly greater counts).
    pub music_confidence: f64,
    /// Minimum fraction of music-event frames.
    pub music_duration_ratio: f64,
    pub ssim_threshold: f64,
    /// Non-overlapping temporal windows for the static-video check.
    pub ssim_windows: usize,
    /// Frame sampling rate for the visual stages.
    pub ssim_fps: f64,
    /// Reject when mean SSIM exceeds the threshold (static video). Setting
    /// this false flips to the literal low-SSIM rejection for audits.
    pub reject_high_ssim: bool,
    pub finetune_n: usize,
    /// Size of the benchmark-candidate pool sampled from the non-finetune
    /// remainder.
    pub bench_n: usize,
    pub seed: u64,
    /// Optional JSON array of record ids promoted from candidate to bench.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expert_file: Option<String>,
    /// Optional directory for separated accompaniment stems.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separated_dir: Option<String>,
}

impl Default for CurateConfig {
    fn default() -> Self {
        CurateConfig {
            min_duration_s: 30.0,
            max_duration_s: 480.0,
            blocked_categories: vec!["Interview".into(), "News".into(), "Gaming".into()],
            music_confidence: 0.5,
            music_duration_ratio: 0.5,
            ssim_threshold: 0.8,
            ssim_windows: 8,
            ssim_fps: 2.0,
            reject_high_ssim: true,
            finetune_n: 20_000,
            bench_n: 1_000,
            seed: 0,
            expert_file: None,
            separated_dir: None,
        }
    }
}

impl CurateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_duration_s >= self.max_duration_s {
            return Err(Error::config("min duration must be below max duration"));
        }
        for (name, v) in [
            ("music_confidence", self.music_confidence),
            ("music_duration_ratio", self.music_duration_ratio),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(-1.0..=1.0).contains(&self.ssim_threshold) {
            return Err(Error::config("ssim threshold must lie in [-1, 1]"));
        }
        if self.ssim_windows == 0 || self.ssim_fps <= 0.0 {
            return Err(Error::config("ssim windows and fps must be positive"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: CurateConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("curate config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse a JSONL manifest, quarantining unparseable rows as
/// `(line_number, raw_line)`.
pub fn parse_manifest(text: &str) -> (Vec<MediaRecord>, Vec<(usize, String)>) {
    let mut records = Vec::new();
    let mut quarantined = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<MediaRecord>(line) {
            Ok(rec) => records.push(rec),
            Err(_) => quarantined.push((i + 1, line.to_string())),
        }
    }
    (records, quarantined)
}

/// Serialize records to JSONL (deterministic field and key order).
pub fn manifest_to_string(records: &[MediaRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip_and_quarantine() {
        let text = concat!(
            r#"{"id":"a","video":"v.y4m","audio":"a.wav","duration_s":60.0,"category":"Vlog"}"#,
            "\n",
            "this is not json\n",
            r#"{"id":"b","video":"w.y4m","audio":"b.wav","duration_s":90.0}"#,
            "\n"
        );
        let (records, quarantined) = parse_manifest(text);
        assert_eq!(records.len(), 2);
        assert_eq!(quarantined.len(), 1);
        assert_eq!(quarantined[0].0, 2);

        let round = manifest_to_string(&records);
        let (again, q2) = parse_manifest(&round);
        assert_eq!(records, again);
        assert!(q2.is_empty());
    }

    #[test]
    fn config_validation_and_toml() {
        let cfg = CurateConfig::from_toml("min_duration_s = 10.0\nfinetune_n = 3\n").unwrap();
        assert_eq!(cfg.min_duration_s, 10.0);
        assert_eq!(cfg.finetune_n, 3);
        assert_eq!(cfg.max_duration_s, 480.0);

        assert!(CurateConfig::from_toml("music_confidence = 1.5").is_err());
    }
}
