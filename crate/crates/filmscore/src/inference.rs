//! Sliding-window long-form generation.
//!
//! A video of length `L` is covered by windows of `window_s` seconds advancing
//! by `window_s - overlap_s`. The long-term conditioning is computed once from
//! the whole video; each window fuses it with that window's short-term frame
//! span. Continuity across seams is handled in token space: the last
//! `overlap_s` seconds of already-generated tokens are teacher-forced as a
//! prompt and only the not-yet-emitted remainder of the window is kept, so
//! emitted spans tile `[0, L]` exactly. The first window emits its first
//! `window_s - overlap_s` seconds with no prompt. When the stride does not
//! land exactly on `L`, a final window is right-aligned to the video end and
//! emits only the missing suffix.

use serde::{Deserialize, Serialize};

use crate::codec::{Codec, Waveform};
use crate::decoder::{generate, DecoderParams, Pattern, TokenMatrix};
use crate::error::{Error, Result};
use crate::frontend::{even_indices, FrameFeatures};
use crate::fusion::{fuse, project, refine_term, Branch, FusionParams, TermFeatures};

/// One planned window, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_start: f64,
    pub t_end: f64,
    pub emit_start: f64,
    pub emit_end: f64,
}

/// The full window plan for a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSchedule {
    pub window_s: f64,
    pub overlap_s: f64,
    pub duration_s: f64,
    pub windows: Vec<Window>,
}

/// Plan the sliding windows covering `[0, duration_s]`.
pub fn plan_windows(duration_s: f64, window_s: f64, overlap_s: f64) -> Result<WindowSchedule> {
    if !duration_s.is_finite() || duration_s <= 0.0 {
        return Err(Error::config("duration must be positive"));
    }
    if !overlap_s.is_finite() || overlap_s <= 0.0 || overlap_s >= window_s {
        return Err(Error::config(format!(
            "overlap {overlap_s} must satisfy 0 < overlap < window {window_s}"
        )));
    }
    let mut windows = Vec::new();
    if duration_s <= window_s {
        windows.push(Window {
            t_start: 0.0,
            t_end: duration_s,
            emit_start: 0.0,
            emit_end: duration_s,
        });
    } else {
        let stride = window_s - overlap_s;
        let n_full = (duration_s / stride + 1e-9).floor() as usize;
        for i in 0..n_full {
            let t = i as f64 * stride;
            windows.push(Window {
                t_start: t,
                t_end: (t + window_s).min(duration_s),
                emit_start: t,
                emit_end: t + stride,
            });
        }
        let emitted = n_full as f64 * stride;
        if duration_s - emitted > 1e-9 {
            // Right-align the final window to the video end.
            windows.push(Window {
                t_start: duration_s - window_s,
                t_end: duration_s,
                emit_start: emitted,
                emit_end: duration_s,
            });
        } else if let Some(last) = windows.last_mut() {
            last.emit_end = duration_s;
        }
    }
    Ok(WindowSchedule {
        window_s,
        overlap_s,
        duration_s,
        windows,
    })
}

/// Sampling knobs for long-form generation.
#[derive(Debug, Clone, Copy)]
pub struct GenerateOptions {
    pub top_k: usize,
    pub temperature: f64,
    pub seed: u64,
    /// Cap on the long-term frame selection (`min(N, cap)` frames are used).
    pub n_long_cap: usize,
}

/// Generate one seamless token stream and decoded waveform for a whole video.
///
/// `features` must cover the full duration at `fps`. Window `i` consumes
/// `seed + i`, so the first window reproduces a plain [`generate`] call with
/// the same seed. Deterministic for fixed inputs.
#[allow(clippy::too_many_arguments)]
pub fn generate_long(
    features: &FrameFeatures,
    fps: f64,
    fusion: &FusionParams,
    decoder: &DecoderParams,
    pattern: Pattern,
    codec: &dyn Codec,
    schedule: &WindowSchedule,
    opts: &GenerateOptions,
) -> Result<(TokenMatrix, Waveform)> {
    let spec = codec.spec();
    if spec.codebooks != decoder.config.codebooks || spec.vocab != decoder.config.vocab {
        return Err(Error::config(
            "codec spec does not match decoder (K, V)",
        ));
    }
    if schedule.windows.is_empty() {
        return Err(Error::config("empty window schedule"));
    }
    let n = features.n_frames();
    let frame_rate = spec.frame_rate;

    // Long-term conditioning: one whole-video selection, refined once.
    let n_long = opts.n_long_cap.clamp(1, n);
    let idx = even_indices(n, n_long);
    let long_sel = features.values.select(ndarray::Axis(0), &idx);
    let long: TermFeatures = refine_term(long_sel.view(), Branch::Long, fusion)?;

    let mut tokens: Option<TokenMatrix> = None;
    for (i, w) in schedule.windows.iter().enumerate() {
        let f0 = ((w.t_start * fps + 1e-9).floor() as usize).min(n.saturating_sub(1));
        let f1 = (w.t_end * fps - 1e-9).ceil() as usize;
        if f1 > n || f0 >= f1 {
            return Err(Error::Index(format!(
                "window [{:.2}, {:.2}) needs frames [{f0}, {f1}) but only {n} available",
                w.t_start, w.t_end
            )));
        }
        let short_sel = features
            .values
            .slice(ndarray::s![f0..f1, .., ..])
            .to_owned();
        let short = refine_term(short_sel.view(), Branch::Short, fusion)?;
        let z_prime = fuse(&short, &long, fusion)?;
        let z = project(&z_prime, fusion)?;

        let e0 = (w.emit_start * frame_rate).round() as usize;
        let e1 = (w.emit_end * frame_rate).round() as usize;
        if e1 <= e0 {
            continue;
        }
        let n_new = e1 - e0;
        let prompt_tokens = (schedule.overlap_s * frame_rate).round() as usize;
        let prompt = match (&tokens, e0) {
            (Some(acc), e0) if e0 > 0 => {
                let plen = prompt_tokens.min(e0);
                Some(acc.slice_steps(e0 - plen, e0)?)
            }
            _ => None,
        };
        let out = generate(
            &z,
            n_new,
            decoder,
            pattern,
            opts.top_k,
            opts.temperature,
            opts.seed.wrapping_add(i as u64),
            prompt.as_ref(),
        )?;
        let plen = prompt.as_ref().map_or(0, |p| p.steps());
        let new_part = out.slice_steps(plen, plen + n_new)?;
        tokens = Some(match tokens {
            Some(acc) => acc.concat_steps(&new_part)?,
            None => new_part,
        });
    }

    let tokens = tokens.ok_or_else(|| Error::EmptyInput("no tokens generated".into()))?;
    let wave = codec.decode(&tokens)?;
    Ok((tokens, wave))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::StubCodec;
    use crate::decoder::DecoderConfig;
    use crate::fusion::{condition, FusionConfig};
    use ndarray::Array3;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hundred_second_video_window_starts() {
        let plan = plan_windows(100.0, 30.0, 5.0).unwrap();
        let starts: Vec<f64> = plan.windows.iter().map(|w| w.t_start).collect();
        assert_eq!(starts, vec![0.0, 25.0, 50.0, 75.0]);
        let last = plan.windows.last().unwrap();
        assert_eq!((last.t_start, last.t_end), (75.0, 100.0));
        let emits: Vec<(f64, f64)> = plan
            .windows
            .iter()
            .map(|w| (w.emit_start, w.emit_end))
            .collect();
        assert_eq!(
            emits,
            vec![(0.0, 25.0), (25.0, 50.0), (50.0, 75.0), (75.0, 100.0)]
        );
    }

    #[test]
    fn short_video_single_window() {
        let plan = plan_windows(20.0, 30.0, 5.0).unwrap();
        assert_eq!(plan.windows.len(), 1);
        let w = plan.windows[0];
        assert_eq!((w.t_start, w.t_end, w.emit_start, w.emit_end), (0.0, 20.0, 0.0, 20.0));
    }

    #[test]
    fn tail_window_right_aligned() {
        let plan = plan_windows(97.0, 30.0, 5.0).unwrap();
        assert_eq!(plan.windows.len(), 4);
        let tail = plan.windows[3];
        assert!((tail.t_start - 67.0).abs() < 1e-9);
        assert!((tail.t_end - 97.0).abs() < 1e-9);
        assert!((tail.emit_start - 75.0).abs() < 1e-9);
        assert!((tail.emit_end - 97.0).abs() < 1e-9);
    }

    #[test]
    fn emitted_spans_tile_random_durations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let duration = rng.random_range(10.0..600.0);
            let plan = plan_windows(duration, 30.0, 5.0).unwrap();
            let mut cursor = 0.0;
            for w in &plan.windows {
                assert!((w.emit_start - cursor).abs() < 1e-9, "gap at {cursor}");
                assert!(w.emit_end > w.emit_start);
                assert!(w.t_start <= w.emit_start + 1e-9);
                assert!(w.t_end + 1e-9 >= w.emit_end);
                cursor = w.emit_end;
            }
            assert!((cursor - duration).abs() < 1e-9);
            // Full windows advance by the stride.
            for pair in plan.windows.windows(2) {
                let gap = pair[1].emit_start - pair[0].emit_start;
                assert!(gap > 0.0);
            }
        }
    }

    #[test]
    fn invalid_overlap_is_config_error() {
        assert!(matches!(
            plan_windows(100.0, 30.0, 30.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            plan_windows(100.0, 30.0, 0.0),
            Err(Error::Config(_))
        ));
    }

    fn tiny_models(m: usize, k: usize, vocab: u32) -> (FusionParams, DecoderParams) {
        let fusion = FusionParams::init(
            FusionConfig {
                dim: 8,
                refiner_heads: 2,
                cross_heads: 2,
                out_dim: m,
            },
            7,
        )
        .unwrap();
        let decoder = DecoderParams::init(
            DecoderConfig {
                n_layers: 1,
                hidden: m,
                n_heads: 2,
                ff_mult: 2,
                vocab,
                codebooks: k,
            },
            8,
        )
        .unwrap();
        (fusion, decoder)
    }

    fn random_features(n: usize, seed: u64) -> FrameFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FrameFeatures::new(Array3::from_shape_fn((n, 2, 8), |_| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap()
    }

    #[test]
    fn single_window_equals_plain_generate() {
        let (fusion, decoder) = tiny_models(16, 2, 17);
        let codec = StubCodec::new(800, 4.0, 2, 17).unwrap();
        let fps = 2.0;
        let duration = 4.0;
        let features = random_features(8, 21);
        let plan = plan_windows(duration, 30.0, 5.0).unwrap();
        let opts = GenerateOptions {
            top_k: 5,
            temperature: 1.0,
            seed: 99,
            n_long_cap: 6,
        };
        let (tokens, wave) = generate_long(
            &features,
            fps,
            &fusion,
            &decoder,
            Pattern::Delay,
            &codec,
            &plan,
            &opts,
        )
        .unwrap();
        assert_eq!(tokens.steps(), 16); // 4 s * 4 tokens/s

        // Reproduce by hand: whole clip is both long and short span.
        let idx = even_indices(8, 6);
        let long_sel = features.values.select(ndarray::Axis(0), &idx);
        let short_sel = features.values.slice(ndarray::s![0..8, .., ..]).to_owned();
        let z = condition(long_sel.view(), short_sel.view(), &fusion).unwrap();
        let direct = generate(&z, 16, &decoder, Pattern::Delay, 5, 1.0, 99, None).unwrap();
        assert_eq!(tokens, direct);

        let expected_samples = 16 * 200; // frame_len = 800 / 4
        assert_eq!(wave.samples.len(), expected_samples);
    }

    #[test]
    fn first_window_matches_standalone_in_multi_window_run() {
        let (fusion, decoder) = tiny_models(16, 2, 17);
        let codec = StubCodec::new(800, 4.0, 2, 17).unwrap();
        let fps = 2.0;
        let duration = 9.0; // window 5, overlap 1 -> emits [0,4), [4,8), tail [8,9)
        let features = random_features(18, 31);
        let plan = plan_windows(duration, 5.0, 1.0).unwrap();
        assert!(plan.windows.len() >= 2);
        let opts = GenerateOptions {
            top_k: 4,
            temperature: 1.0,
            seed: 1234,
            n_long_cap: 8,
        };
        let (tokens, _) = generate_long(
            &features,
            fps,
            &fusion,
            &decoder,
            Pattern::Delay,
            &codec,
            &plan,
            &opts,
        )
        .unwrap();

        // Standalone window 0: short span = frames [0, 10), emits 16 tokens.
        let idx = even_indices(18, 8);
        let long_sel = features.values.select(ndarray::Axis(0), &idx);
        let short_sel = features.values.slice(ndarray::s![0..10, .., ..]).to_owned();
        let z = condition(long_sel.view(), short_sel.view(), &fusion).unwrap();
        let direct = generate(&z, 16, &decoder, Pattern::Delay, 4, 1.0, 1234, None).unwrap();
        let first_span = tokens.slice_steps(0, 16).unwrap();
        assert_eq!(first_span, direct);
    }

    #[test]
    fn long_duration_token_count() {
        // 100 s at 50 tokens/s must come out at 5000 +/- 1 steps.
        let (fusion, decoder) = tiny_models(8, 1, 9);
        let codec = StubCodec::new(3200, 50.0, 1, 9).unwrap();
        let fps = 0.5;
        let duration = 100.0;
        let features = random_features(50, 41);
        let plan = plan_windows(duration, 30.0, 5.0).unwrap();
        let opts = GenerateOptions {
            top_k: 2,
            temperature: 1.0,
            seed: 5,
            n_long_cap: 10,
        };
        let (tokens, wave) = generate_long(
            &features,
            fps,
            &fusion,
            &decoder,
            Pattern::Delay,
            &codec,
            &plan,
            &opts,
        )
        .unwrap();
        assert!((tokens.steps() as i64 - 5000).abs() <= 1);
        assert!((wave.duration_s() - duration).abs() <= 1.0 / 50.0);
    }

    #[test]
    fn deterministic_end_to_end() {
        let (fusion, decoder) = tiny_models(16, 2, 17);
        let codec = StubCodec::new(800, 4.0, 2, 17).unwrap();
        let features = random_features(20, 51);
        let plan = plan_windows(10.0, 5.0, 1.0).unwrap();
        let opts = GenerateOptions {
            top_k: 4,
            temperature: 1.0,
            seed: 777,
            n_long_cap: 8,
        };
        let run = || {
            generate_long(
                &features,
                2.0,
                &fusion,
                &decoder,
                Pattern::Delay,
                &codec,
                &plan,
                &opts,
            )
            .unwrap()
        };
        let (t1, w1) = run();
        let (t2, w2) = run();
        assert_eq!(t1, t2);
        assert_eq!(w1.samples, w2.samples);
    }

    #[test]
    fn missing_features_is_index_error() {
        let (fusion, decoder) = tiny_models(16, 2, 17);
        let codec = StubCodec::new(800, 4.0, 2, 17).unwrap();
        let features = random_features(4, 61); // 2 s of features at fps 2
        let plan = plan_windows(10.0, 5.0, 1.0).unwrap();
        let opts = GenerateOptions {
            top_k: 4,
            temperature: 1.0,
            seed: 7,
            n_long_cap: 4,
        };
        let out = generate_long(
            &features,
            2.0,
            &fusion,
            &decoder,
            Pattern::Delay,
            &codec,
            &plan,
            &opts,
        );
        assert!(matches!(out, Err(Error::Index(_))));
    }
}
