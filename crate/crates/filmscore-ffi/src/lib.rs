//! C ABI for the video-to-music toolkit.
//!
//! Conventions:
//!
//! - Handles (`FsEngine`) are opaque pointers created and destroyed by this
//!   library; never free them with `free()`.
//! - Every fallible call returns an [`FsStatus`]; `FS_STATUS_OK` is zero.
//!   On failure, [`fs_last_error_message`] returns a thread-local,
//!   NUL-terminated description valid until the next failing call on the
//!   same thread.
//! - Matrix buffers are row-major `f64` arrays owned by the caller.
//!
//! The generated header lives at `include/filmscore.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};

use filmscore::checkpoint::load_checkpoint;
use filmscore::codec::write_wav;
use filmscore::config::RunConfig;
use filmscore::decoder::DecoderParams;
use filmscore::error::Error;
use filmscore::frontend::{encode_frames, sample_frames};
use filmscore::fusion::FusionParams;
use filmscore::inference::{generate_long, plan_windows, GenerateOptions};
use filmscore::metrics::{
    alignment_score, average_rank, density_coverage, frechet, Direction, EmbeddingSet, SourceTag,
};
use ndarray::Array2;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    FsStatusOk = 0,
    FsStatusInvalidArgument = 1,
    FsStatusIo = 2,
    FsStatusNumeric = 3,
    FsStatusConfig = 4,
    FsStatusFormat = 5,
    FsStatusInternal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(e: &Error) -> FsStatus {
    match e {
        Error::Config(_) => FsStatus::FsStatusConfig,
        Error::Numeric(_) => FsStatus::FsStatusNumeric,
        Error::Format(_) => FsStatus::FsStatusFormat,
        Error::Io(_) | Error::Decode(_) => FsStatus::FsStatusIo,
        _ => FsStatus::FsStatusInternal,
    }
}

fn fail(e: Error) -> FsStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn invalid(msg: &str) -> FsStatus {
    set_error(msg);
    FsStatus::FsStatusInvalidArgument
}

/// Last error message for this thread (empty string when none).
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn cstr_path(ptr: *const c_char) -> Result<PathBuf, FsStatus> {
    if ptr.is_null() {
        return Err(invalid("null path"));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(invalid("path is not valid UTF-8")),
    }
}

/// An initialized generation pipeline: configuration plus model parameters.
pub struct FsEngine {
    config: RunConfig,
    fusion: FusionParams,
    decoder: DecoderParams,
}

fn engine_from_config(config: RunConfig) -> Result<FsEngine, Error> {
    let fusion = FusionParams::init(config.fusion_config(), config.seed)?;
    let decoder = DecoderParams::init(config.decoder_config(), config.seed.wrapping_add(1))?;
    Ok(FsEngine {
        config,
        fusion,
        decoder,
    })
}

/// Create an engine with default configuration and seed-initialized
/// (untrained) parameters. Returns null on failure.
#[no_mangle]
pub extern "C" fn fs_engine_new_default() -> *mut FsEngine {
    match engine_from_config(RunConfig::default()) {
        Ok(engine) => Box::into_raw(Box::new(engine)),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Create an engine from a TOML run-configuration file. Returns null on
/// failure; see [`fs_last_error_message`].
///
/// # Safety
/// `config_path` must be a valid NUL-terminated string or null.
#[no_mangle]
pub unsafe extern "C" fn fs_engine_new_from_file(config_path: *const c_char) -> *mut FsEngine {
    let path = match cstr_path(config_path) {
        Ok(p) => p,
        Err(_) => return std::ptr::null_mut(),
    };
    let config = match RunConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            set_error(&e.to_string());
            return std::ptr::null_mut();
        }
    };
    match engine_from_config(config) {
        Ok(engine) => Box::into_raw(Box::new(engine)),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Load trained parameters into the engine.
///
/// # Safety
/// `engine` must come from an `fs_engine_new*` call; `checkpoint_path` must
/// be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fs_engine_load_checkpoint(
    engine: *mut FsEngine,
    checkpoint_path: *const c_char,
) -> FsStatus {
    let Some(engine) = engine.as_mut() else {
        return invalid("null engine");
    };
    let path = match cstr_path(checkpoint_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match load_checkpoint(
        &path,
        engine.config.fusion_config(),
        engine.config.decoder_config(),
    ) {
        Ok((fusion, decoder)) => {
            engine.fusion = fusion;
            engine.decoder = decoder;
            FsStatus::FsStatusOk
        }
        Err(e) => fail(e),
    }
}

fn generate_impl(engine: &FsEngine, video: &Path, out_wav: &Path, seed: u64) -> Result<(), Error> {
    let cfg = &engine.config;
    let codec = cfg.build_codec()?;
    let clip = sample_frames(video, cfg.frontend.fps, f64::INFINITY)?;
    let encoder = cfg.build_encoder(clip.channels());
    let features = encode_frames(&clip, encoder.as_ref())?;
    let schedule = plan_windows(
        clip.duration_s,
        cfg.inference.window_s,
        cfg.inference.overlap_s,
    )?;
    let opts = GenerateOptions {
        top_k: cfg.sampling.top_k,
        temperature: cfg.sampling.temperature,
        seed,
        n_long_cap: cfg.frontend.n_long_cap,
    };
    let (_, wave) = generate_long(
        &features,
        cfg.frontend.fps,
        &engine.fusion,
        &engine.decoder,
        cfg.pattern(),
        &codec,
        &schedule,
        &opts,
    )?;
    write_wav(out_wav, &wave)
}

/// Generate music for a video file and write a 16-bit PCM mono WAV.
///
/// # Safety
/// `engine` must come from an `fs_engine_new*` call; both paths must be
/// valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn fs_engine_generate(
    engine: *const FsEngine,
    video_path: *const c_char,
    out_wav_path: *const c_char,
    seed: u64,
) -> FsStatus {
    let Some(engine) = engine.as_ref() else {
        return invalid("null engine");
    };
    let video = match cstr_path(video_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let out = match cstr_path(out_wav_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match generate_impl(engine, &video, &out, seed) {
        Ok(()) => FsStatus::FsStatusOk,
        Err(e) => fail(e),
    }
}

/// Destroy an engine created by `fs_engine_new*`. Null is a no-op.
///
/// # Safety
/// `engine` must not be used after this call.
#[no_mangle]
pub unsafe extern "C" fn fs_engine_free(engine: *mut FsEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

unsafe fn matrix_from(ptr: *const f64, rows: usize, cols: usize) -> Result<Array2<f64>, FsStatus> {
    if ptr.is_null() {
        return Err(invalid("null matrix pointer"));
    }
    if rows == 0 || cols == 0 {
        return Err(invalid("matrix dimensions must be positive"));
    }
    let slice = std::slice::from_raw_parts(ptr, rows * cols);
    Ok(Array2::from_shape_fn((rows, cols), |(i, j)| {
        slice[i * cols + j]
    }))
}

/// Frechet distance between two row-major embedding matrices
/// (`gen_n x dim` and `ref_n x dim`; both sides need at least 2 rows).
///
/// # Safety
/// Buffers must hold at least `n * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_metric_frechet(
    gen: *const f64,
    gen_n: usize,
    reference: *const f64,
    ref_n: usize,
    dim: usize,
    out: *mut f64,
) -> FsStatus {
    if out.is_null() {
        return invalid("null output pointer");
    }
    let g = match matrix_from(gen, gen_n, dim) {
        Ok(m) => m,
        Err(s) => return s,
    };
    let r = match matrix_from(reference, ref_n, dim) {
        Ok(m) => m,
        Err(s) => return s,
    };
    let result = (|| {
        let gs = EmbeddingSet::new(g, SourceTag::Generated)?;
        let rs = EmbeddingSet::new(r, SourceTag::Reference)?;
        frechet(&gs, &rs)
    })();
    match result {
        Ok(v) => {
            *out = v;
            FsStatus::FsStatusOk
        }
        Err(e) => fail(e),
    }
}

/// k-NN density and coverage of `gen` against `reference`.
///
/// # Safety
/// Buffers must hold at least `n * dim` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_metric_density_coverage(
    gen: *const f64,
    gen_n: usize,
    reference: *const f64,
    ref_n: usize,
    dim: usize,
    k: usize,
    out_density: *mut f64,
    out_coverage: *mut f64,
) -> FsStatus {
    if out_density.is_null() || out_coverage.is_null() {
        return invalid("null output pointer");
    }
    let g = match matrix_from(gen, gen_n, dim) {
        Ok(m) => m,
        Err(s) => return s,
    };
    let r = match matrix_from(reference, ref_n, dim) {
        Ok(m) => m,
        Err(s) => return s,
    };
    let result = (|| {
        let gs = EmbeddingSet::new(g, SourceTag::Generated)?;
        let rs = EmbeddingSet::new(r, SourceTag::Reference)?;
        density_coverage(&gs, &rs, k)
    })();
    match result {
        Ok((d, c)) => {
            *out_density = d;
            *out_coverage = c;
            FsStatus::FsStatusOk
        }
        Err(e) => fail(e),
    }
}

/// Mean cosine similarity of row-paired embeddings (`n x dim` each).
///
/// # Safety
/// Buffers must hold at least `n * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_metric_alignment(
    audio: *const f64,
    video: *const f64,
    n: usize,
    dim: usize,
    out: *mut f64,
) -> FsStatus {
    if out.is_null() {
        return invalid("null output pointer");
    }
    let a = match matrix_from(audio, n, dim) {
        Ok(m) => m,
        Err(s) => return s,
    };
    let v = match matrix_from(video, n, dim) {
        Ok(m) => m,
        Err(s) => return s,
    };
    match alignment_score(&a, &v) {
        Ok(s) => {
            *out = s;
            FsStatus::FsStatusOk
        }
        Err(e) => fail(e),
    }
}

/// Average rank per method over a `n_methods x n_metrics` table; direction
/// byte per metric: 0 = lower is better, 1 = higher is better. `out` must
/// hold `n_methods` doubles.
///
/// # Safety
/// Buffers must be sized as documented.
#[no_mangle]
pub unsafe extern "C" fn fs_metric_average_rank(
    table: *const f64,
    n_methods: usize,
    n_metrics: usize,
    directions: *const u8,
    out: *mut f64,
) -> FsStatus {
    if directions.is_null() || out.is_null() {
        return invalid("null pointer");
    }
    let t = match matrix_from(table, n_methods, n_metrics) {
        Ok(m) => m,
        Err(s) => return s,
    };
    let dir_bytes = std::slice::from_raw_parts(directions, n_metrics);
    let dirs: Vec<Direction> = dir_bytes
        .iter()
        .map(|&b| {
            if b == 0 {
                Direction::LowerBetter
            } else {
                Direction::HigherBetter
            }
        })
        .collect();
    match average_rank(&t, &dirs) {
        Ok(ar) => {
            let out_slice = std::slice::from_raw_parts_mut(out, n_methods);
            out_slice.copy_from_slice(&ar);
            FsStatus::FsStatusOk
        }
        Err(e) => fail(e),
    }
}

/// Plan sliding windows for a clip. Each window writes four doubles
/// (`t_start, t_end, emit_start, emit_end`) into `out`, which holds up to
/// `capacity` windows; the required count lands in `out_count` even when it
/// exceeds the capacity.
///
/// # Safety
/// `out` must hold `4 * capacity` doubles; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_plan_windows(
    duration_s: f64,
    window_s: f64,
    overlap_s: f64,
    out: *mut f64,
    capacity: usize,
    out_count: *mut usize,
) -> FsStatus {
    if out_count.is_null() || (capacity > 0 && out.is_null()) {
        return invalid("null output pointer");
    }
    match plan_windows(duration_s, window_s, overlap_s) {
        Ok(plan) => {
            *out_count = plan.windows.len();
            let writable = plan.windows.len().min(capacity);
            let out_slice = std::slice::from_raw_parts_mut(out, 4 * writable);
            for (i, w) in plan.windows.iter().take(writable).enumerate() {
                out_slice[4 * i] = w.t_start;
                out_slice[4 * i + 1] = w.t_end;
                out_slice[4 * i + 2] = w.emit_start;
                out_slice[4 * i + 3] = w.emit_end;
            }
            FsStatus::FsStatusOk
        }
        Err(e) => fail(e),
    }
}
