//! Per-record filter stages.

use ndarray::Axis;

use super::ssim::ssim;
use super::{CurateConfig, MediaRecord, StageVerdict};
use crate::error::{Error, Result};
use crate::frontend::VideoClip;

fn pass() -> StageVerdict {
    StageVerdict {
        pass: true,
        reason: None,
    }
}

fn fail(reason: impl Into<String>) -> StageVerdict {
    StageVerdict {
        pass: false,
        reason: Some(reason.into()),
    }
}

/// Rule-based screening: both tracks present, duration within bounds,
/// category not blocked.
pub fn coarse_filter(rec: &MediaRecord, cfg: &CurateConfig) -> Result<StageVerdict> {
    if rec.video.as_deref().unwrap_or("").is_empty() {
        return Ok(fail("missing_video_track"));
    }
    if rec.audio.as_deref().unwrap_or("").is_empty() {
        return Ok(fail("missing_audio_track"));
    }
    let duration = rec
        .duration_s
        .ok_or_else(|| Error::Data(format!("record {}: missing duration metadata", rec.id)))?;
    if duration < cfg.min_duration_s {
        return Ok(fail("too_short"));
    }
    if duration > cfg.max_duration_s {
        return Ok(fail("too_long"));
    }
    if let Some(cat) = &rec.category {
        if cfg
            .blocked_categories
            .iter()
            .any(|b| b.eq_ignore_ascii_case(cat))
        {
            return Ok(fail("blocked_domain"));
        }
    }
    Ok(pass())
}

/// Music-event screening over frame probabilities.
///
/// A frame is a music event iff its probability is strictly greater than the
/// confidence threshold; the record passes iff the event-frame ratio reaches
/// the duration-ratio threshold. Probabilities exactly at the confidence
/// threshold therefore do not count.
pub fn music_event_filter(frame_probs: &[f64], cfg: &CurateConfig) -> Result<StageVerdict> {
    if frame_probs.is_empty() {
        return Err(Error::Data("empty music-probability sequence".into()));
    }
    if frame_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Data("music probabilities must lie in [0, 1]".into()));
    }
    let events = frame_probs
        .iter()
        .filter(|&&p| p > cfg.music_confidence)
        .count();
    let ratio = events as f64 / frame_probs.len() as f64;
    if ratio >= cfg.music_duration_ratio {
        Ok(pass())
    } else {
        Ok(fail(format!("insufficient_music_ratio:{ratio:.3}")))
    }
}

/// Static-video screening via windowed first/last-frame SSIM.
///
/// The sampled frames are split into `ssim_windows` non-overlapping chunks;
/// each contributes `ssim(first frame, last frame)` and the mean is compared
/// against the threshold. With `reject_high_ssim` (the default) a mean
/// strictly above the threshold marks the video as static and rejects it;
/// the flag flips the direction for auditing the literal alternative.
pub fn static_video_filter(clip: &VideoClip, cfg: &CurateConfig) -> Result<StageVerdict> {
    let n = clip.n_frames();
    if n < cfg.ssim_windows {
        return Err(Error::Data(format!(
            "{n} frames cannot fill {} ssim windows",
            cfg.ssim_windows
        )));
    }
    let w = cfg.ssim_windows;
    let mut total = 0.0;
    for i in 0..w {
        let lo = i * n / w;
        let hi = ((i + 1) * n / w).max(lo + 1);
        let first = clip.frames.index_axis(Axis(0), lo).mapv(|v| v as f64);
        let last = clip.frames.index_axis(Axis(0), hi - 1).mapv(|v| v as f64);
        total += ssim(first.view(), last.view())?;
    }
    let mean = total / w as f64;
    let is_static = mean > cfg.ssim_threshold;
    let rejected = if cfg.reject_high_ssim {
        is_static
    } else {
        mean < cfg.ssim_threshold
    };
    if rejected {
        Ok(fail(format!("static_video:ssim={mean:.3}")))
    } else {
        Ok(pass())
    }
}
