//! Video frame sampling, frame encoding, and long/short frame selection.
//!
//! Video input is YUV4MPEG2 (`.y4m`), the uncompressed interchange format
//! every ffmpeg build can produce (`ffmpeg -i clip.mp4 -pix_fmt yuv444p
//! clip.y4m`). Frames are converted to RGB (or kept single-channel for mono
//! sources) and normalized to `[0, 1]`; any model-specific normalization is
//! owned by the frame-encoder adapter.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use ndarray::{Array2, Array3, Array4, ArrayView3, ArrayView4, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Frames sampled from one video at a fixed rate.
///
/// `frames` is `N x C x H x W` with pixel values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct VideoClip {
    pub frames: Array4<f32>,
    pub fps: f64,
    pub duration_s: f64,
}

impl VideoClip {
    pub fn n_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.frames.shape()[1]
    }

    /// Frame `i` as a `C x H x W` view.
    pub fn frame(&self, i: usize) -> ArrayView3<'_, f32> {
        self.frames.index_axis(Axis(0), i)
    }
}

/// Per-frame feature token grids, `N x P x D`.
///
/// `P` counts the tokens per frame including the leading class token at
/// index 0; `D` is the feature width.
#[derive(Debug, Clone)]
pub struct FrameFeatures {
    pub values: Array3<f64>,
}

impl FrameFeatures {
    pub fn new(values: Array3<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("frame features contain non-finite entries"));
        }
        Ok(FrameFeatures { values })
    }

    pub fn n_frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.values.shape()[2]
    }
}

/// Adapter contract for frame encoders: a batch of `B x C x H x W` frames in,
/// `B x P x D` feature tokens out, with `(P, D)` declared up front.
pub trait FrameEncoder {
    /// `(tokens_per_frame, feature_dim)` of the encoder output.
    fn output_dims(&self) -> (usize, usize);

    fn encode(&self, frames: ArrayView4<'_, f32>) -> Result<Array3<f64>>;
}

/// Seeded random linear projection of flattened patches.
///
/// Each frame is split into a `grid x grid` patch layout; every patch is
/// flattened and multiplied by one shared projection matrix drawn once from
/// the seed. The class token is the mean of the patch tokens, so
/// `P = grid^2 + 1`.
pub struct StubFrameEncoder {
    grid: usize,
    dim: usize,
    seed: u64,
}

impl StubFrameEncoder {
    pub fn new(grid: usize, dim: usize, seed: u64) -> Self {
        assert!(grid >= 1 && dim >= 1);
        StubFrameEncoder { grid, dim, seed }
    }

    fn projection(&self, patch_len: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let scale = 1.0 / (patch_len as f64).sqrt();
        Array2::from_shape_fn((patch_len, self.dim), |_| {
            rng.random_range(-1.0..1.0) * scale
        })
    }
}

impl FrameEncoder for StubFrameEncoder {
    fn output_dims(&self) -> (usize, usize) {
        (self.grid * self.grid + 1, self.dim)
    }

    fn encode(&self, frames: ArrayView4<'_, f32>) -> Result<Array3<f64>> {
        let (n, c, h, w) = frames.dim();
        if h % self.grid != 0 || w % self.grid != 0 {
            return Err(Error::config(format!(
                "frame size {h}x{w} not divisible by patch grid {}",
                self.grid
            )));
        }
        let (ph, pw) = (h / self.grid, w / self.grid);
        let patch_len = c * ph * pw;
        let proj = self.projection(patch_len);
        let p = self.grid * self.grid + 1;
        let mut out = Array3::zeros((n, p, self.dim));
        let mut flat = vec![0.0f64; patch_len];
        for i in 0..n {
            for gy in 0..self.grid {
                for gx in 0..self.grid {
                    let mut idx = 0;
                    for ch in 0..c {
                        for y in 0..ph {
                            for x in 0..pw {
                                flat[idx] =
                                    frames[[i, ch, gy * ph + y, gx * pw + x]] as f64;
                                idx += 1;
                            }
                        }
                    }
                    let t = 1 + gy * self.grid + gx;
                    for d in 0..self.dim {
                        let mut acc = 0.0;
                        for (k, &f) in flat.iter().enumerate() {
                            acc += f * proj[[k, d]];
                        }
                        out[[i, t, d]] = acc;
                    }
                }
            }
            // Class token: mean of the patch tokens.
            for d in 0..self.dim {
                let mut acc = 0.0;
                for t in 1..p {
                    acc += out[[i, t, d]];
                }
                out[[i, 0, d]] = acc / (p - 1) as f64;
            }
        }
        Ok(out)
    }
}

/// Per-patch, per-channel mean pooling; `D == C` by construction.
///
/// Useful when tests need feature values that are trivially recomputable.
pub struct MeanPoolEncoder {
    grid: usize,
    channels: usize,
}

impl MeanPoolEncoder {
    pub fn new(grid: usize, channels: usize) -> Self {
        MeanPoolEncoder { grid, channels }
    }
}

impl FrameEncoder for MeanPoolEncoder {
    fn output_dims(&self) -> (usize, usize) {
        (self.grid * self.grid + 1, self.channels)
    }

    fn encode(&self, frames: ArrayView4<'_, f32>) -> Result<Array3<f64>> {
        let (n, c, h, w) = frames.dim();
        if c != self.channels {
            return Err(Error::config(format!(
                "encoder expects {} channels, got {c}",
                self.channels
            )));
        }
        if h % self.grid != 0 || w % self.grid != 0 {
            return Err(Error::config(format!(
                "frame size {h}x{w} not divisible by patch grid {}",
                self.grid
            )));
        }
        let (ph, pw) = (h / self.grid, w / self.grid);
        let p = self.grid * self.grid + 1;
        let mut out = Array3::zeros((n, p, c));
        for i in 0..n {
            for gy in 0..self.grid {
                for gx in 0..self.grid {
                    let t = 1 + gy * self.grid + gx;
                    for ch in 0..c {
                        let mut acc = 0.0f64;
                        for y in 0..ph {
                            for x in 0..pw {
                                acc += frames[[i, ch, gy * ph + y, gx * pw + x]] as f64;
                            }
                        }
                        out[[i, t, ch]] = acc / (ph * pw) as f64;
                    }
                }
            }
            for ch in 0..c {
                let mut acc = 0.0;
                for t in 1..p {
                    acc += out[[i, t, ch]];
                }
                out[[i, 0, ch]] = acc / (p - 1) as f64;
            }
        }
        Ok(out)
    }
}

/// Decode a video and sample frames at uniform timestamps `k / fps`,
/// truncated at `max_duration_s`.
///
/// The source frame active at timestamp `t` is `floor(t * src_fps)`, i.e.
/// the frame whose display interval contains `t`.
pub fn sample_frames(video_path: &Path, fps: f64, max_duration_s: f64) -> Result<VideoClip> {
    if fps <= 0.0 {
        return Err(Error::config("fps must be positive"));
    }
    if max_duration_s <= 0.0 {
        return Err(Error::config("max_duration_s must be positive"));
    }
    let file = File::open(video_path)
        .map_err(|e| Error::Decode(format!("{}: {e}", video_path.display())))?;
    let mut dec = y4m::decode(BufReader::new(file))
        .map_err(|e| Error::Decode(format!("{}: {e:?}", video_path.display())))?;
    let width = dec.get_width();
    let height = dec.get_height();
    let rate = dec.get_framerate();
    if rate.num == 0 || rate.den == 0 {
        return Err(Error::Decode("invalid framerate in y4m header".into()));
    }
    let src_fps = rate.num as f64 / rate.den as f64;
    let colorspace = dec.get_colorspace();
    if colorspace.get_bit_depth() != 8 {
        return Err(Error::Decode(format!(
            "unsupported bit depth {}",
            colorspace.get_bit_depth()
        )));
    }

    let mut src_frames: Vec<Array3<f32>> = Vec::new();
    let mut n_src = 0usize;
    loop {
        match dec.read_frame() {
            Ok(frame) => {
                src_frames.push(convert_frame(&frame, width, height, colorspace)?);
                n_src += 1;
            }
            Err(y4m::Error::EOF) => break,
            Err(e) => return Err(Error::Decode(format!("frame {n_src}: {e:?}"))),
        }
    }
    if n_src == 0 {
        return Err(Error::EmptyInput(format!(
            "{}: video has no frames",
            video_path.display()
        )));
    }
    let src_duration = n_src as f64 / src_fps;
    let duration = src_duration.min(max_duration_s);
    let n_out = (duration * fps - 1e-9).floor() as usize + 1;

    let channels = src_frames[0].shape()[0];
    let mut frames = Array4::zeros((n_out, channels, height, width));
    for k in 0..n_out {
        let t = k as f64 / fps;
        let src_idx = ((t * src_fps + 1e-9).floor() as usize).min(n_src - 1);
        frames
            .index_axis_mut(Axis(0), k)
            .assign(&src_frames[src_idx]);
    }
    Ok(VideoClip {
        frames,
        fps,
        duration_s: duration,
    })
}

/// YUV (BT.601 limited range) to RGB in `[0, 1]`; mono stays single-channel.
fn convert_frame(
    frame: &y4m::Frame<'_>,
    width: usize,
    height: usize,
    colorspace: y4m::Colorspace,
) -> Result<Array3<f32>> {
    use y4m::Colorspace::*;
    let y_plane = frame.get_y_plane();
    if y_plane.len() < width * height {
        return Err(Error::Decode("short y plane".into()));
    }
    match colorspace {
        Cmono => {
            let mut out = Array3::zeros((1, height, width));
            for r in 0..height {
                for c in 0..width {
                    out[[0, r, c]] = norm_y(y_plane[r * width + c]);
                }
            }
            Ok(out)
        }
        C444 => {
            let u = frame.get_u_plane();
            let v = frame.get_v_plane();
            let mut out = Array3::zeros((3, height, width));
            for r in 0..height {
                for c in 0..width {
                    let i = r * width + c;
                    let (rr, gg, bb) = yuv_to_rgb(y_plane[i], u[i], v[i]);
                    out[[0, r, c]] = rr;
                    out[[1, r, c]] = gg;
                    out[[2, r, c]] = bb;
                }
            }
            Ok(out)
        }
        C420 | C420jpeg | C420paldv | C420mpeg2 => {
            let u = frame.get_u_plane();
            let v = frame.get_v_plane();
            let cw = width.div_ceil(2);
            let mut out = Array3::zeros((3, height, width));
            for r in 0..height {
                for c in 0..width {
                    let ci = (r / 2) * cw + c / 2;
                    let (rr, gg, bb) = yuv_to_rgb(y_plane[r * width + c], u[ci], v[ci]);
                    out[[0, r, c]] = rr;
                    out[[1, r, c]] = gg;
                    out[[2, r, c]] = bb;
                }
            }
            Ok(out)
        }
        other => Err(Error::Decode(format!("unsupported colorspace {other:?}"))),
    }
}

fn norm_y(y: u8) -> f32 {
    (((y as f32) - 16.0) / 219.0).clamp(0.0, 1.0)
}

fn yuv_to_rgb(y: u8, u: u8, v: u8) -> (f32, f32, f32) {
    let yf = (y as f32 - 16.0) / 219.0;
    let uf = (u as f32 - 128.0) / 224.0;
    let vf = (v as f32 - 128.0) / 224.0;
    let r = yf + 1.402 * vf;
    let g = yf - 0.344_136 * uf - 0.714_136 * vf;
    let b = yf + 1.772 * uf;
    (r.clamp(0.0, 1.0), g.clamp(0.0, 1.0), b.clamp(0.0, 1.0))
}

/// Map frames through an encoder, preserving frame order.
pub fn encode_frames(clip: &VideoClip, encoder: &dyn FrameEncoder) -> Result<FrameFeatures> {
    let out = encoder.encode(clip.frames.view())?;
    let (p, d) = encoder.output_dims();
    if out.shape() != [clip.n_frames(), p, d] {
        return Err(Error::config(format!(
            "encoder produced shape {:?}, declared {:?}",
            out.shape(),
            [clip.n_frames(), p, d]
        )));
    }
    FrameFeatures::new(out)
}

/// Indices of `n_long` frames evenly spaced over `[0, n-1]`.
///
/// `idx_i = round_ties_even(i * (n-1) / (n_long-1))`; endpoint-inclusive for
/// `n_long >= 2`, and `n_long == 1` selects frame 0. Spacing `>= 1`
/// guarantees no duplicates when `n_long <= n`.
pub fn even_indices(n: usize, n_long: usize) -> Vec<usize> {
    if n_long == 1 {
        return vec![0];
    }
    (0..n_long)
        .map(|i| {
            let x = i as f64 * (n - 1) as f64 / (n_long - 1) as f64;
            x.round_ties_even() as usize
        })
        .collect()
}

/// Select the long-term (evenly sampled) and short-term (contiguous) frame
/// feature subsets.
pub fn select_long_short(
    features: &FrameFeatures,
    n_long: usize,
    n_short: usize,
    short_start: usize,
) -> Result<(Array3<f64>, Array3<f64>)> {
    let n = features.n_frames();
    if n_long < 1 || n_long > n {
        return Err(Error::Index(format!(
            "n_long {n_long} out of range for {n} frames"
        )));
    }
    if n_short < 1 || short_start + n_short > n {
        return Err(Error::Index(format!(
            "short window [{short_start}, {}) out of range for {n} frames",
            short_start + n_short
        )));
    }
    let idx = even_indices(n, n_long);
    let long = features.values.select(Axis(0), &idx);
    let short = features
        .values
        .slice(ndarray::s![short_start..short_start + n_short, .., ..])
        .to_owned();
    Ok((long, short))
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Write a synthetic grayscale y4m where frame `i` has the constant
    /// luma returned by `level(i)` (already in the 16..=235 range).
    pub fn write_gray_y4m(
        path: &Path,
        width: usize,
        height: usize,
        fps: usize,
        n_frames: usize,
        level: impl Fn(usize) -> u8,
    ) {
        let file = File::create(path).unwrap();
        let mut enc = y4m::encode(width, height, y4m::Ratio::new(fps, 1))
            .with_colorspace(y4m::Colorspace::Cmono)
            .write_header(file)
            .unwrap();
        for i in 0..n_frames {
            let plane = vec![level(i); width * height];
            let frame = y4m::Frame::new([&plane, &[], &[]], None);
            enc.write_frame(&frame).unwrap();
        }
    }

}
