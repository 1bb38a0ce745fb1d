//! Pipeline orchestration: per-record stages, alignment ranking, split
//! assignment, and atomic manifest emission.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adapters::{AvEmbedder, MusicTagger, SourceSeparator};
use super::filters::{coarse_filter, music_event_filter, static_video_filter};
use super::{CurateConfig, MediaRecord, Split, StageVerdict};
use crate::codec::{read_wav, write_wav, Waveform};
use crate::error::{Error, Result};
use crate::frontend::{sample_frames, VideoClip};

/// The pluggable model adapters used by the content stages.
pub struct Adapters<'a> {
    pub tagger: &'a dyn MusicTagger,
    pub separator: &'a dyn SourceSeparator,
    pub av_embedder: &'a dyn AvEmbedder,
}

/// Run the separation adapter and enforce the length contract
/// (within one 512-sample hop of the input).
pub fn separate_music(wave: &Waveform, separator: &dyn SourceSeparator) -> Result<Waveform> {
    let out = separator.separate(wave).map_err(|e| Error::Stage {
        stage: "separation".into(),
        message: e.to_string(),
    })?;
    let diff = out.samples.len().abs_diff(wave.samples.len());
    if diff > 512 {
        return Err(Error::Stage {
            stage: "separation".into(),
            message: format!("separator changed length by {diff} samples"),
        });
    }
    Ok(out)
}

/// Sort eligible (all-pass) records by alignment score and assign splits:
/// the top `finetune_n` become `finetune`, a seeded random `bench_n`-sample
/// of the remainder becomes `bench_candidate`, the rest `pretrain`.
///
/// Ties in score break toward the lexicographically smaller id, and the
/// candidate sample is drawn from the score-sorted remainder, so the outcome
/// is invariant to the input order of `records`.
pub fn rank_and_split(
    records: &mut [MediaRecord],
    finetune_n: usize,
    bench_n: usize,
    seed: u64,
) -> Result<()> {
    let mut eligible: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.stages.is_empty() && r.all_passed())
        .map(|(i, _)| i)
        .collect();
    for &i in &eligible {
        if records[i].alignment_score.is_none() {
            return Err(Error::Data(format!(
                "record {} reached ranking without an alignment score",
                records[i].id
            )));
        }
    }
    if finetune_n > eligible.len() {
        return Err(Error::config(format!(
            "finetune_n {} exceeds {} eligible records",
            finetune_n,
            eligible.len()
        )));
    }
    eligible.sort_by(|&a, &b| {
        let sa = records[a].alignment_score.unwrap();
        let sb = records[b].alignment_score.unwrap();
        sb.partial_cmp(&sa)
            .unwrap()
            .then_with(|| records[a].id.cmp(&records[b].id))
    });
    for (rank, &i) in eligible.iter().enumerate() {
        records[i].split = Some(if rank < finetune_n {
            Split::Finetune
        } else {
            Split::Pretrain
        });
    }
    // Seeded sample of the remainder as the benchmark-candidate pool.
    let remainder: Vec<usize> = eligible[finetune_n..].to_vec();
    let take = bench_n.min(remainder.len());
    let mut pool = remainder;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for pick in 0..take {
        let j = rng.random_range(pick..pool.len());
        pool.swap(pick, j);
        records[pool[pick]].split = Some(Split::BenchCandidate);
    }
    Ok(())
}

/// Promote expert-selected candidate ids to the final bench split.
pub fn finalize_bench(records: &mut [MediaRecord], expert_ids: &[String]) -> usize {
    let wanted: BTreeSet<&str> = expert_ids.iter().map(|s| s.as_str()).collect();
    let mut promoted = 0;
    for rec in records.iter_mut() {
        if rec.split == Some(Split::BenchCandidate) && wanted.contains(rec.id.as_str()) {
            rec.split = Some(Split::Bench);
            promoted += 1;
        }
    }
    promoted
}

fn resolve(root: Option<&Path>, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    match root {
        Some(root) if !p.is_absolute() => root.join(p),
        _ => p.to_path_buf(),
    }
}

fn stage_error(stage: &str, e: &Error) -> StageVerdict {
    StageVerdict {
        pass: false,
        reason: Some(format!("stage_error:{stage}:{e}")),
    }
}

const STAGE_ORDER: [&str; 4] = ["coarse", "music_event", "static_video", "separation"];

struct LoadedMedia {
    audio: Option<Waveform>,
    clip: Option<VideoClip>,
}

fn process_record(
    rec: &mut MediaRecord,
    cfg: &CurateConfig,
    adapters: &Adapters<'_>,
    resume: bool,
    root: Option<&Path>,
) -> LoadedMedia {
    let mut media = LoadedMedia {
        audio: None,
        clip: None,
    };
    for stage in STAGE_ORDER {
        if resume {
            if let Some(v) = rec.stages.get(stage) {
                if v.pass {
                    continue;
                }
                return media;
            }
        }
        let verdict = run_stage(stage, rec, cfg, adapters, root, &mut media);
        let passed = verdict.pass;
        rec.stages.insert(stage.to_string(), verdict);
        if !passed {
            rec.alignment_score = None;
            rec.split = None;
            return media;
        }
    }
    media
}

fn run_stage(
    stage: &str,
    rec: &MediaRecord,
    cfg: &CurateConfig,
    adapters: &Adapters<'_>,
    root: Option<&Path>,
    media: &mut LoadedMedia,
) -> StageVerdict {
    match stage {
        "coarse" => match coarse_filter(rec, cfg) {
            Ok(v) => v,
            Err(e) => stage_error(stage, &e),
        },
        "music_event" => {
            let audio = match load_audio(rec, root, media) {
                Ok(a) => a,
                Err(e) => return stage_error(stage, &e),
            };
            match adapters
                .tagger
                .music_probs(audio)
                .and_then(|probs| music_event_filter(&probs, cfg))
            {
                Ok(v) => v,
                Err(e) => stage_error(stage, &e),
            }
        }
        "static_video" => {
            let clip = match load_clip(rec, cfg, root, media) {
                Ok(c) => c,
                Err(e) => return stage_error(stage, &e),
            };
            match static_video_filter(clip, cfg) {
                Ok(v) => v,
                Err(e) => stage_error(stage, &e),
            }
        }
        "separation" => {
            let audio = match load_audio(rec, root, media) {
                Ok(a) => a.clone(),
                Err(e) => return stage_error(stage, &e),
            };
            match separate_music(&audio, adapters.separator) {
                Ok(stem) => {
                    if let Some(dir) = &cfg.separated_dir {
                        let out = resolve(root, dir).join(format!("{}.wav", rec.id));
                        if let Err(e) = std::fs::create_dir_all(out.parent().unwrap())
                            .map_err(Error::from)
                            .and_then(|_| write_wav(&out, &stem))
                        {
                            return stage_error(stage, &e);
                        }
                    }
                    StageVerdict {
                        pass: true,
                        reason: None,
                    }
                }
                Err(e) => stage_error(stage, &e),
            }
        }
        other => stage_error(other, &Error::config("unknown stage")),
    }
}

fn load_audio<'m>(
    rec: &MediaRecord,
    root: Option<&Path>,
    media: &'m mut LoadedMedia,
) -> Result<&'m Waveform> {
    if media.audio.is_none() {
        let path = resolve(root, rec.audio.as_deref().unwrap_or(""));
        media.audio = Some(read_wav(&path)?);
    }
    Ok(media.audio.as_ref().unwrap())
}

fn load_clip<'m>(
    rec: &MediaRecord,
    cfg: &CurateConfig,
    root: Option<&Path>,
    media: &'m mut LoadedMedia,
) -> Result<&'m VideoClip> {
    if media.clip.is_none() {
        let path = resolve(root, rec.video.as_deref().unwrap_or(""));
        media.clip = Some(sample_frames(&path, cfg.ssim_fps, cfg.max_duration_s + 1.0)?);
    }
    Ok(media.clip.as_ref().unwrap())
}

/// Result of a pipeline run.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub records: Vec<MediaRecord>,
    /// `(line_number, raw_line)` of unparseable manifest rows.
    pub quarantined: Vec<(usize, String)>,
}

/// Run the full pipeline over a manifest text.
///
/// Stages apply in order; the output preserves input order and never adds
/// records; re-running on the output reproduces it exactly (the stages are
/// deterministic and already-rejected records stop at their recorded stage).
pub fn run_pipeline(
    manifest_text: &str,
    cfg: &CurateConfig,
    adapters: &Adapters<'_>,
    resume: bool,
    media_root: Option<&Path>,
) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let (mut records, quarantined) = super::parse_manifest(manifest_text);
    {
        let mut seen = BTreeSet::new();
        for rec in &records {
            if !seen.insert(rec.id.clone()) {
                return Err(Error::Data(format!("duplicate record id {}", rec.id)));
            }
        }
    }
    for rec in records.iter_mut() {
        let media = process_record(rec, cfg, adapters, resume, media_root);
        if rec.all_passed() && !rec.stages.is_empty() {
            // Alignment scoring on the media loaded during the stages.
            let score = score_alignment(rec, cfg, adapters, media_root, media);
            match score {
                Ok(s) => rec.alignment_score = Some(s),
                Err(e) => {
                    rec.stages
                        .insert("alignment".into(), stage_error("alignment", &e));
                    rec.alignment_score = None;
                    rec.split = None;
                }
            }
        }
    }
    rank_and_split(&mut records, cfg.finetune_n, cfg.bench_n, cfg.seed)?;
    if let Some(file) = &cfg.expert_file {
        let text = std::fs::read_to_string(resolve(media_root, file))?;
        let ids: Vec<String> = serde_json::from_str(&text)?;
        finalize_bench(&mut records, &ids);
    }
    Ok(PipelineOutcome {
        records,
        quarantined,
    })
}

fn score_alignment(
    rec: &MediaRecord,
    cfg: &CurateConfig,
    adapters: &Adapters<'_>,
    root: Option<&Path>,
    mut media: LoadedMedia,
) -> Result<f64> {
    let audio = match media.audio.take() {
        Some(a) => a,
        None => read_wav(&resolve(root, rec.audio.as_deref().unwrap_or("")))?,
    };
    let clip = match media.clip.take() {
        Some(c) => c,
        None => sample_frames(
            &resolve(root, rec.video.as_deref().unwrap_or("")),
            cfg.ssim_fps,
            cfg.max_duration_s + 1.0,
        )?,
    };
    let va = adapters.av_embedder.embed_video(&clip)?;
    let aa = adapters.av_embedder.embed_audio(&audio)?;
    let dot: f64 = va.iter().zip(&aa).map(|(x, y)| x * y).sum();
    let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = aa.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::numeric("zero-norm embedding"));
    }
    Ok(dot / (na * nb))
}

/// File-level wrapper: read `input`, process, atomically write `output`
/// (temp-then-rename) plus `<output>.quarantine.jsonl` for any corrupt rows.
pub fn run_pipeline_file(
    input: &Path,
    output: &Path,
    cfg: &CurateConfig,
    adapters: &Adapters<'_>,
    resume: bool,
    media_root: Option<&Path>,
) -> Result<PipelineOutcome> {
    let text = std::fs::read_to_string(input)?;
    let outcome = run_pipeline(&text, cfg, adapters, resume, media_root)?;
    let tmp = output.with_extension("jsonl.tmp");
    std::fs::write(&tmp, super::manifest_to_string(&outcome.records))?;
    std::fs::rename(&tmp, output)?;
    if !outcome.quarantined.is_empty() {
        let qpath = output.with_extension("quarantine.jsonl");
        let mut q = String::new();
        for (line, raw) in &outcome.quarantined {
            q.push_str(&format!(
                "{}\n",
                serde_json::json!({"line": line, "raw": raw})
            ));
        }
        std::fs::write(qpath, q)?;
    }
    Ok(outcome)
}
