//! Structural similarity between two images.
//!
//! Standard windowed SSIM: 11x11 Gaussian window with sigma 1.5, constants
//! `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2` for dynamic range `L = 1`, evaluated
//! at every fully-interior window position (no padding) and averaged over
//! positions and channels.

use ndarray::{Array2, ArrayView3};

use crate::error::{Error, Result};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.0001; // (0.01 * 1)^2
const C2: f64 = 0.0009; // (0.03 * 1)^2

fn gaussian_kernel() -> Array2<f64> {
    let mut k = Array2::zeros((WINDOW, WINDOW));
    let c = (WINDOW / 2) as f64;
    let denom = 2.0 * SIGMA * SIGMA;
    for i in 0..WINDOW {
        for j in 0..WINDOW {
            let dy = i as f64 - c;
            let dx = j as f64 - c;
            k[[i, j]] = (-(dy * dy + dx * dx) / denom).exp();
        }
    }
    let total = k.sum();
    k / total
}

/// Per-position SSIM values (channel-averaged), one per interior window.
pub fn ssim_map(a: ArrayView3<'_, f64>, b: ArrayView3<'_, f64>) -> Result<Array2<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::Data(format!(
            "ssim shape mismatch: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let (channels, h, w) = a.dim();
    if h < WINDOW || w < WINDOW {
        return Err(Error::Data(format!(
            "images must be at least {WINDOW}x{WINDOW}, got {h}x{w}"
        )));
    }
    let kernel = gaussian_kernel();
    let mut map = Array2::zeros((h - WINDOW + 1, w - WINDOW + 1));
    for y in 0..=(h - WINDOW) {
        for x in 0..=(w - WINDOW) {
            let mut acc = 0.0;
            for ch in 0..channels {
                let mut mu_a = 0.0;
                let mut mu_b = 0.0;
                let mut aa = 0.0;
                let mut bb = 0.0;
                let mut ab = 0.0;
                for i in 0..WINDOW {
                    for j in 0..WINDOW {
                        let wgt = kernel[[i, j]];
                        let va = a[[ch, y + i, x + j]];
                        let vb = b[[ch, y + i, x + j]];
                        mu_a += wgt * va;
                        mu_b += wgt * vb;
                        aa += wgt * va * va;
                        bb += wgt * vb * vb;
                        ab += wgt * va * vb;
                    }
                }
                let var_a = aa - mu_a * mu_a;
                let var_b = bb - mu_b * mu_b;
                let cov = ab - mu_a * mu_b;
                acc += ((2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2))
                    / ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2));
            }
            map[[y, x]] = acc / channels as f64;
        }
    }
    Ok(map)
}

/// Mean SSIM over all window positions and channels; in `[-1, 1]`.
pub fn ssim(a: ArrayView3<'_, f64>, b: ArrayView3<'_, f64>) -> Result<f64> {
    let map = ssim_map(a, b)?;
    Ok(map.sum() / map.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn self_similarity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = Array3::from_shape_fn((3, 16, 16), |_| rng.random_range(0.0..1.0));
        let s = ssim(img.view(), img.view()).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Array3::from_shape_fn((1, 14, 14), |_| rng.random_range(0.0..1.0));
        let b = Array3::from_shape_fn((1, 14, 14), |_| rng.random_range(0.0..1.0));
        let ab = ssim(a.view(), b.view()).unwrap();
        let ba = ssim(b.view(), a.view()).unwrap();
        assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn bounded_on_random_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = Array3::from_shape_fn((2, 12, 13), |_| rng.random_range(0.0..1.0));
            let b = Array3::from_shape_fn((2, 12, 13), |_| rng.random_range(0.0..1.0));
            let s = ssim(a.view(), b.view()).unwrap();
            assert!((-1.0..=1.0).contains(&s), "{s}");
        }
    }

    #[test]
    fn inverted_checkerboard_approaches_minus_one() {
        // Binary checkerboard vs its inversion: balanced means, anti-
        // correlated structure, so interior patches sit near -1.
        let x = Array3::from_shape_fn((1, 16, 16), |(_, y, c)| ((y + c) % 2) as f64);
        let inv = x.mapv(|v| 1.0 - v);
        let map = ssim_map(x.view(), inv.view()).unwrap();
        for v in map.iter() {
            assert!(*v < -0.98, "patch value {v}");
        }
    }

    #[test]
    fn matches_pixel_loop_oracle() {
        // Independent recomputation with explicitly built statistics.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Array3::from_shape_fn((1, 13, 12), |_| rng.random_range(0.0..1.0));
        let b = Array3::from_shape_fn((1, 13, 12), |_| {
            if rng.random_range(0.0..1.0) < 0.5 {
                0.0
            } else {
                1.0
            }
        });
        let got = ssim(a.view(), b.view()).unwrap();

        let mut kernel = vec![vec![0.0f64; 11]; 11];
        let mut ksum = 0.0;
        for (i, row) in kernel.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                let dy = i as f64 - 5.0;
                let dx = j as f64 - 5.0;
                *cell = (-(dy * dy + dx * dx) / 4.5).exp();
                ksum += *cell;
            }
        }
        let mut total = 0.0;
        let mut count = 0;
        for y in 0..3 {
            for x in 0..2 {
                let mut ma = 0.0;
                let mut mb = 0.0;
                for i in 0..11 {
                    for j in 0..11 {
                        ma += kernel[i][j] / ksum * a[[0, y + i, x + j]];
                        mb += kernel[i][j] / ksum * b[[0, y + i, x + j]];
                    }
                }
                let mut va = 0.0;
                let mut vb = 0.0;
                let mut cov = 0.0;
                for i in 0..11 {
                    for j in 0..11 {
                        let wgt = kernel[i][j] / ksum;
                        va += wgt * (a[[0, y + i, x + j]] - ma) * (a[[0, y + i, x + j]] - ma);
                        vb += wgt * (b[[0, y + i, x + j]] - mb) * (b[[0, y + i, x + j]] - mb);
                        cov += wgt * (a[[0, y + i, x + j]] - ma) * (b[[0, y + i, x + j]] - mb);
                    }
                }
                total += ((2.0 * ma * mb + 1e-4) * (2.0 * cov + 9e-4))
                    / ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
                count += 1;
            }
        }
        let expected = total / count as f64;
        // The oracle uses the centered-moment form; equal up to float noise.
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn too_small_image_is_data_error() {
        let a = Array3::zeros((1, 8, 8));
        assert!(matches!(
            ssim(a.view(), a.view()),
            Err(Error::Data(_))
        ));
    }
}
