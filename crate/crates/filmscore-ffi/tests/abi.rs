//! Exercises the C ABI from Rust: statuses, error messages, handle
//! lifecycle, metric buffers, and a file-to-file generate round trip.

use std::ffi::{CStr, CString};

use filmscore_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(fs_last_error_message())
            .to_string_lossy()
            .into_owned()
    }
}

#[test]
fn version_is_non_empty() {
    let v = unsafe { CStr::from_ptr(fs_version()) };
    assert!(!v.to_bytes().is_empty());
}

#[test]
fn frechet_over_buffers() {
    // Two 1-D sets with sample stats (0, 1) and (1, 1): distance 1.
    let h = 0.5f64.sqrt();
    let gen = [-h, h];
    let reference = [1.0 - h, 1.0 + h];
    let mut out = f64::NAN;
    let status = unsafe {
        fs_metric_frechet(gen.as_ptr(), 2, reference.as_ptr(), 2, 1, &mut out)
    };
    assert_eq!(status, FsStatus::FsStatusOk);
    assert!((out - 1.0).abs() < 1e-9, "{out}");
}

#[test]
fn null_pointers_are_invalid_argument() {
    let mut out = 0.0;
    let status = unsafe { fs_metric_frechet(std::ptr::null(), 2, std::ptr::null(), 2, 1, &mut out) };
    assert_eq!(status, FsStatus::FsStatusInvalidArgument);
    assert!(!last_error().is_empty());
}

#[test]
fn density_coverage_and_rank_buffers() {
    // gen == ref: coverage 1.
    let pts: Vec<f64> = (0..12).map(|i| i as f64 * 0.37).collect();
    let mut density = 0.0;
    let mut coverage = 0.0;
    let status = unsafe {
        fs_metric_density_coverage(
            pts.as_ptr(),
            6,
            pts.as_ptr(),
            6,
            2,
            3,
            &mut density,
            &mut coverage,
        )
    };
    assert_eq!(status, FsStatus::FsStatusOk);
    assert_eq!(coverage, 1.0);

    // Bad k propagates a config status.
    let status = unsafe {
        fs_metric_density_coverage(
            pts.as_ptr(),
            6,
            pts.as_ptr(),
            6,
            2,
            6,
            &mut density,
            &mut coverage,
        )
    };
    assert_eq!(status, FsStatus::FsStatusConfig);

    // Rank: method 0 dominates.
    let table = [0.1, 0.9, 0.5, 0.2];
    let dirs = [0u8, 1u8];
    let mut ar = [0.0f64; 2];
    let status = unsafe {
        fs_metric_average_rank(table.as_ptr(), 2, 2, dirs.as_ptr(), ar.as_mut_ptr())
    };
    assert_eq!(status, FsStatus::FsStatusOk);
    assert_eq!(ar, [1.0, 2.0]);
}

#[test]
fn alignment_zero_norm_is_numeric() {
    let a = [1.0, 0.0, 0.0, 0.0];
    let mut out = 0.0;
    let status = unsafe { fs_metric_alignment(a.as_ptr(), a.as_ptr(), 2, 2, &mut out) };
    assert_eq!(status, FsStatus::FsStatusNumeric);
    assert!(last_error().contains("zero-norm"));
}

#[test]
fn window_planning_through_buffer() {
    let mut out = [0.0f64; 64];
    let mut count = 0usize;
    let status = unsafe {
        fs_plan_windows(100.0, 30.0, 5.0, out.as_mut_ptr(), 16, &mut count)
    };
    assert_eq!(status, FsStatus::FsStatusOk);
    assert_eq!(count, 4);
    let starts: Vec<f64> = (0..4).map(|i| out[4 * i]).collect();
    assert_eq!(starts, vec![0.0, 25.0, 50.0, 75.0]);
    assert_eq!(out[4 * 3 + 3], 100.0);

    let status = unsafe {
        fs_plan_windows(100.0, 30.0, 30.0, out.as_mut_ptr(), 16, &mut count)
    };
    assert_eq!(status, FsStatus::FsStatusConfig);
}

fn write_test_video(path: &std::path::Path) {
    let file = std::fs::File::create(path).unwrap();
    let mut enc = y4m::encode(16, 16, y4m::Ratio::new(2, 1))
        .with_colorspace(y4m::Colorspace::Cmono)
        .write_header(file)
        .unwrap();
    for i in 0..16 {
        let plane = vec![30 + 10 * (i as u8), 0][..1].repeat(256);
        let frame = y4m::Frame::new([&plane, &[], &[]], None);
        enc.write_frame(&frame).unwrap();
    }
}

#[test]
fn engine_lifecycle_and_generate() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        r#"
seed = 5
[frontend]
fps = 2.0
feature_dim = 8
[model]
hidden = 16
layers = 1
heads = 2
ff_mult = 2
[codec]
sample_rate = 3200
frame_rate = 4.0
codebooks = 2
vocab = 17
[sampling]
top_k = 4
"#,
    )
    .unwrap();

    let engine = unsafe { fs_engine_new_from_file(c(config_path.to_str().unwrap()).as_ptr()) };
    assert!(!engine.is_null(), "engine: {}", last_error());

    let video = dir.path().join("clip.y4m");
    write_test_video(&video);
    let out_wav = dir.path().join("out.wav");
    let status = unsafe {
        fs_engine_generate(
            engine,
            c(video.to_str().unwrap()).as_ptr(),
            c(out_wav.to_str().unwrap()).as_ptr(),
            9,
        )
    };
    assert_eq!(status, FsStatus::FsStatusOk, "{}", last_error());
    let reader = hound::WavReader::open(&out_wav).unwrap();
    assert_eq!(reader.spec().sample_rate, 3200);
    assert_eq!(reader.spec().channels, 1);
    // 8 s of video at 4 tokens/s -> 32 tokens -> 8 s of audio.
    assert_eq!(reader.duration(), 8 * 3200);

    // Determinism through the ABI.
    let out_wav2 = dir.path().join("out2.wav");
    let status = unsafe {
        fs_engine_generate(
            engine,
            c(video.to_str().unwrap()).as_ptr(),
            c(out_wav2.to_str().unwrap()).as_ptr(),
            9,
        )
    };
    assert_eq!(status, FsStatus::FsStatusOk);
    assert_eq!(
        std::fs::read(&out_wav).unwrap(),
        std::fs::read(&out_wav2).unwrap()
    );

    // Missing checkpoint surfaces a format/io status, not a crash.
    let status = unsafe {
        fs_engine_load_checkpoint(engine, c("/nonexistent/model.fsar").as_ptr())
    };
    assert_ne!(status, FsStatus::FsStatusOk);
    assert!(last_error().contains("model.fsar"));

    unsafe { fs_engine_free(engine) };
    unsafe { fs_engine_free(std::ptr::null_mut()) }; // null is a no-op
}

#[test]
fn default_engine_constructs() {
    let engine = fs_engine_new_default();
    assert!(!engine.is_null());
    unsafe { fs_engine_free(engine) };
}
