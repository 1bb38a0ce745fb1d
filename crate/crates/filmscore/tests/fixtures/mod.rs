//! Hand-labeled synthetic curation fixtures: nine records covering every
//! rejection path plus one corrupt manifest row.
#![allow(dead_code)] // shared between test binaries; each uses a subset

use std::fs::File;
use std::path::Path;

use filmscore::codec::{write_wav, Waveform};
use filmscore::curation::{
    manifest_to_string, run_pipeline, Adapters, BandEnergyTagger, BandStopSeparator,
    CurateConfig, HashProjectionAv, MediaRecord, PipelineOutcome, Split,
};

pub fn write_noise_y4m(path: &Path, seed: usize) {
    let file = File::create(path).unwrap();
    let mut enc = y4m::encode(16, 16, y4m::Ratio::new(8, 1))
        .with_colorspace(y4m::Colorspace::Cmono)
        .write_header(file)
        .unwrap();
    for f in 0..32 {
        let mut plane = vec![0u8; 256];
        for y in 0..16 {
            for x in 0..16 {
                let h = (f * 7919 + y * 104729 + x * 1299709 + seed * 15485863) % 997;
                plane[y * 16 + x] = 16 + (h % 220) as u8;
            }
        }
        let frame = y4m::Frame::new([&plane, &[], &[]], None);
        enc.write_frame(&frame).unwrap();
    }
}

pub fn write_constant_y4m(path: &Path) {
    let file = File::create(path).unwrap();
    let mut enc = y4m::encode(16, 16, y4m::Ratio::new(8, 1))
        .with_colorspace(y4m::Colorspace::Cmono)
        .write_header(file)
        .unwrap();
    for _ in 0..32 {
        let plane = vec![128u8; 256];
        let frame = y4m::Frame::new([&plane, &[], &[]], None);
        enc.write_frame(&frame).unwrap();
    }
}

pub fn tone(freq: f64, amp: f64, dur_s: f64, sr: u32) -> Vec<f64> {
    let n = (dur_s * sr as f64) as usize;
    (0..n)
        .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
        .collect()
}

fn write_music_wav(path: &Path, freq: f64) {
    let wave = Waveform::new(tone(freq, 0.35, 2.0, 16000), 16000).unwrap();
    write_wav(path, &wave).unwrap();
}

fn write_speechy_wav(path: &Path) {
    // Music for the first hop only (0.5 s of 440 Hz), then out-of-band hiss:
    // event ratio 1/4 < 0.5.
    let mut samples = tone(440.0, 0.35, 0.5, 16000);
    samples.extend(tone(7000.0, 0.35, 1.5, 16000));
    write_wav(path, &Waveform::new(samples, 16000).unwrap()).unwrap();
}

fn write_silent_wav(path: &Path) {
    write_wav(path, &Waveform::silence(32000, 16000)).unwrap();
}

pub fn manifest_line(
    id: &str,
    video: Option<&str>,
    audio: Option<&str>,
    duration: f64,
    category: &str,
) -> String {
    let mut obj = serde_json::json!({
        "id": id,
        "duration_s": duration,
        "category": category,
    });
    if let Some(v) = video {
        obj["video"] = serde_json::json!(v);
    }
    if let Some(a) = audio {
        obj["audio"] = serde_json::json!(a);
    }
    obj.to_string()
}

pub struct FixtureRun {
    pub first: PipelineOutcome,
    pub first_text: String,
    pub second_text: String,
}

pub fn fixture_config() -> CurateConfig {
    CurateConfig {
        ssim_windows: 4,
        finetune_n: 1,
        bench_n: 1,
        seed: 7,
        ..CurateConfig::default()
    }
}

/// Build the media, run the pipeline twice (the second pass over the first
/// pass's output), and hand back both serializations.
pub fn run_fixture_pipeline() -> FixtureRun {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();

    write_noise_y4m(&dir.path().join("noise_a.y4m"), 1);
    write_noise_y4m(&dir.path().join("noise_b.y4m"), 2);
    write_constant_y4m(&dir.path().join("static.y4m"));
    write_music_wav(&dir.path().join("music_a.wav"), 440.0);
    write_music_wav(&dir.path().join("music_b.wav"), 330.0);
    write_speechy_wav(&dir.path().join("speechy.wav"));
    write_silent_wav(&dir.path().join("silent.wav"));

    let lines = vec![
        manifest_line(
            "f01_pass",
            Some(&p("noise_a.y4m")),
            Some(&p("music_a.wav")),
            120.0,
            "Documentary",
        ),
        manifest_line(
            "f02_short",
            Some(&p("noise_a.y4m")),
            Some(&p("music_a.wav")),
            25.0,
            "Documentary",
        ),
        manifest_line(
            "f03_long",
            Some(&p("noise_a.y4m")),
            Some(&p("music_a.wav")),
            500.0,
            "Documentary",
        ),
        manifest_line(
            "f04_gaming",
            Some(&p("noise_a.y4m")),
            Some(&p("music_a.wav")),
            120.0,
            "Gaming",
        ),
        manifest_line("f05_noaudio", Some(&p("noise_a.y4m")), None, 120.0, "Vlog"),
        manifest_line(
            "f06_speechy",
            Some(&p("noise_a.y4m")),
            Some(&p("speechy.wav")),
            120.0,
            "Vlog",
        ),
        manifest_line(
            "f07_silent",
            Some(&p("noise_a.y4m")),
            Some(&p("silent.wav")),
            120.0,
            "Vlog",
        ),
        manifest_line(
            "f08_static",
            Some(&p("static.y4m")),
            Some(&p("music_a.wav")),
            120.0,
            "Vlog",
        ),
        manifest_line(
            "f09_pass",
            Some(&p("noise_b.y4m")),
            Some(&p("music_b.wav")),
            90.0,
            "Travel",
        ),
        "{not valid json".to_string(),
    ];
    let manifest = lines.join("\n") + "\n";

    let cfg = fixture_config();
    let tagger = BandEnergyTagger::default();
    let separator = BandStopSeparator::default();
    let av = HashProjectionAv::new(8, 505);
    let adapters = Adapters {
        tagger: &tagger,
        separator: &separator,
        av_embedder: &av,
    };

    let first = run_pipeline(&manifest, &cfg, &adapters, false, None).unwrap();
    let first_text = manifest_to_string(&first.records);
    let second = run_pipeline(&first_text, &cfg, &adapters, false, None).unwrap();
    let second_text = manifest_to_string(&second.records);
    FixtureRun {
        first,
        first_text,
        second_text,
    }
}

fn find<'a>(records: &'a [MediaRecord], id: &str) -> &'a MediaRecord {
    records
        .iter()
        .find(|r| r.id == id)
        .unwrap_or_else(|| panic!("record {id} missing"))
}

fn assert_failed_at(rec: &MediaRecord, stage: &str, reason_prefix: &str) {
    let (failed_stage, verdict) = rec
        .first_failure()
        .unwrap_or_else(|| panic!("{} should have failed", rec.id));
    assert_eq!(failed_stage, stage, "{} failed at wrong stage", rec.id);
    let reason = verdict.reason.as_deref().unwrap_or("");
    assert!(
        reason.starts_with(reason_prefix),
        "{}: reason '{reason}' does not start with '{reason_prefix}'",
        rec.id
    );
    // Exactly one rejection, and no split.
    let failures = rec.stages.values().filter(|v| !v.pass).count();
    assert_eq!(failures, 1, "{} carries {} failures", rec.id, failures);
    assert_eq!(rec.split, None, "{} must not reach a split", rec.id);
}

pub fn assert_expected_verdicts(run: &FixtureRun) {
    let records = &run.first.records;
    assert_eq!(records.len(), 9);
    assert_eq!(run.first.quarantined.len(), 1);
    assert_eq!(run.first.quarantined[0].0, 10, "corrupt row line number");

    for id in ["f01_pass", "f09_pass"] {
        let rec = find(records, id);
        assert!(rec.all_passed(), "{id} should pass every stage");
        let stages: Vec<&str> = rec.stages.keys().map(|s| s.as_str()).collect();
        assert_eq!(
            stages,
            vec!["coarse", "music_event", "separation", "static_video"],
            "{id} stage set"
        );
        assert!(rec.alignment_score.is_some(), "{id} needs a score");
        assert!(rec.split.is_some(), "{id} needs a split");
    }
    // finetune_n = 1 and bench_n = 1: the two survivors take one slot each.
    let splits: Vec<Split> = ["f01_pass", "f09_pass"]
        .iter()
        .map(|id| find(records, id).split.unwrap())
        .collect();
    assert!(splits.contains(&Split::Finetune));
    assert!(splits.contains(&Split::BenchCandidate));

    assert_failed_at(find(records, "f02_short"), "coarse", "too_short");
    assert_failed_at(find(records, "f03_long"), "coarse", "too_long");
    assert_failed_at(find(records, "f04_gaming"), "coarse", "blocked_domain");
    assert_failed_at(
        find(records, "f05_noaudio"),
        "coarse",
        "missing_audio_track",
    );
    assert_failed_at(
        find(records, "f06_speechy"),
        "music_event",
        "insufficient_music_ratio",
    );
    assert_failed_at(
        find(records, "f07_silent"),
        "music_event",
        "insufficient_music_ratio",
    );
    assert_failed_at(find(records, "f08_static"), "static_video", "static_video");

    assert_eq!(
        run.first_text, run.second_text,
        "pipeline must be byte-identical on its own output"
    );
}
