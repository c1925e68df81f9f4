//! Separable Gaussian smoothing, Sobel gradients and grayscale conversion.
//!
//! Every convolution here uses reflect-101 borders.

use super::image::{reflect101, GrayImage, RgbImage};
use crate::error::{invalid, Result};

const LUMA_R: f32 = 0.299;
const LUMA_G: f32 = 0.587;
const LUMA_B: f32 = 0.114;

/// BT.601 luma.
pub fn rgb_to_gray(img: &RgbImage) -> GrayImage {
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| (LUMA_R * p[0] as f32 + LUMA_G * p[1] as f32 + LUMA_B * p[2] as f32).min(255.0))
        .collect();
    GrayImage::new(img.width(), img.height(), data).expect("dimensions come from a valid image")
}

/// Normalized 1-D Gaussian taps, radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * (sigma as f64) * (sigma as f64);
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| (t / sum) as f32).collect()
}

/// Horizontal then vertical pass of a symmetric odd-length kernel.
pub fn convolve_separable(img: &GrayImage, kernel: &[f32]) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let r = (kernel.len() / 2) as isize;
    let src = img.data();
    let mut tmp = vec![0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0f32;
            for (k, &kv) in kernel.iter().enumerate() {
                let xx = reflect101(x as isize + k as isize - r, w);
                acc += kv * row[xx];
            }
            *o = acc;
        }
    }
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (k, &kv) in kernel.iter().enumerate() {
            let yy = reflect101(y as isize + k as isize - r, h);
            let srow = &tmp[yy * w..(yy + 1) * w];
            for (d, s) in dst.iter_mut().zip(srow) {
                *d += kv * s;
            }
        }
    }
    GrayImage::new(w, h, out).expect("same dimensions as input")
}

pub fn gaussian_blur(img: &GrayImage, sigma: f32) -> Result<GrayImage> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid!("gaussian sigma must be positive, got {sigma}"));
    }
    Ok(convolve_separable(img, &gaussian_kernel(sigma)))
}

/// Horizontal and vertical derivative maps.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f32>,
    pub gy: Vec<f32>,
}

impl Gradients {
    pub fn magnitude(&self) -> Vec<f32> {
        self.gx
            .iter()
            .zip(&self.gy)
            .map(|(a, b)| (a * a + b * b).sqrt())
            .collect()
    }
}

/// 3x3 Sobel cross-correlation: `[[-1,0,1],[-2,0,2],[-1,0,1]]` and its transpose.
pub fn sobel_gradients(img: &GrayImage) -> Result<Gradients> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(invalid!("sobel needs at least 3x3 pixels, got {w}x{h}"));
    }
    let mut gx = vec![0f32; w * h];
    let mut gy = vec![0f32; w * h];
    for y in 0..h {
        let ym = reflect101(y as isize - 1, h);
        let yp = reflect101(y as isize + 1, h);
        for x in 0..w {
            let xm = reflect101(x as isize - 1, w);
            let xp = reflect101(x as isize + 1, w);
            let p = |xx: usize, yy: usize| img.get(xx, yy);
            let dx = (p(xp, ym) - p(xm, ym)) + 2.0 * (p(xp, y) - p(xm, y)) + (p(xp, yp) - p(xm, yp));
            let dy = (p(xm, yp) - p(xm, ym)) + 2.0 * (p(x, yp) - p(x, ym)) + (p(xp, yp) - p(xp, ym));
            gx[y * w + x] = dx;
            gy[y * w + x] = dy;
        }
    }
    Ok(Gradients {
        width: w,
        height: h,
        gx,
        gy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gray(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| rng.gen_range(0.0..255.0))
    }

    #[test]
    fn luma_values() {
        let black = RgbImage::filled(4, 3, [0, 0, 0]);
        assert!(rgb_to_gray(&black).data().iter().all(|&v| v == 0.0));
        let white = RgbImage::filled(4, 3, [255, 255, 255]);
        assert!(rgb_to_gray(&white).data().iter().all(|&v| (v - 255.0).abs() < 1e-4));
        let red = RgbImage::filled(1, 1, [255, 0, 0]);
        assert!((rgb_to_gray(&red).get(0, 0) - 76.245).abs() < 1e-4);
    }

    #[test]
    fn blur_constant_is_identity() {
        let img = GrayImage::filled(20, 13, 87.5);
        for sigma in [0.3, 1.0, 2.5, 6.0] {
            let out = gaussian_blur(&img, sigma).unwrap();
            assert!(out.data().iter().all(|&v| (v - 87.5).abs() < 1e-4));
        }
    }

    #[test]
    fn blur_impulse_center() {
        let mut img = GrayImage::filled(21, 21, 0.0);
        img.set(10, 10, 1.0);
        let out = gaussian_blur(&img, 1.0).unwrap();
        // Oracle: product of the truncated, normalized 1-D Gaussian at the origin.
        let norm: f64 = (-3i32..=3).map(|i| (-(i * i) as f64 / 2.0).exp()).sum();
        let expected = (1.0 / norm).powi(2);
        assert!((out.get(10, 10) as f64 - expected).abs() < 1e-6);
        assert!((expected - 0.1592).abs() < 1e-3);
    }

    #[test]
    fn blur_semigroup() {
        let img = random_gray(48, 40, 3);
        let twice = gaussian_blur(&gaussian_blur(&img, 1.0).unwrap(), 1.0).unwrap();
        let once = gaussian_blur(&img, std::f32::consts::SQRT_2).unwrap();
        let max = twice
            .data()
            .iter()
            .zip(once.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0f32, f32::max);
        assert!(max < 0.5, "max diff {max}");
    }

    #[test]
    fn blur_preserves_mean() {
        let img = random_gray(64, 48, 11);
        let out = gaussian_blur(&img, 2.0).unwrap();
        // Reflect-101 borders re-weight edge pixels, so the mean is preserved up to a
        // small border term; measured on the normalized [0, 1] intensity scale.
        let d = (img.mean() - out.mean()).abs() / 255.0;
        assert!(d < 1e-3, "mean drift {d}");
    }

    #[test]
    fn blur_rejects_bad_sigma() {
        let img = GrayImage::filled(4, 4, 0.0);
        assert!(gaussian_blur(&img, 0.0).is_err());
        assert!(gaussian_blur(&img, -1.0).is_err());
    }

    #[test]
    fn sobel_constant_and_step() {
        let flat = GrayImage::filled(9, 9, 42.0);
        let g = sobel_gradients(&flat).unwrap();
        assert!(g.gx.iter().chain(&g.gy).all(|&v| v == 0.0));

        let c = 4;
        let step = GrayImage::from_fn(10, 8, |x, _| if x <= c { 0.0 } else { 255.0 });
        let g = sobel_gradients(&step).unwrap();
        for y in 1..7 {
            assert_eq!(g.gx[y * 10 + c], 1020.0);
            assert_eq!(g.gx[y * 10 + c + 1], 1020.0);
            assert_eq!(g.gx[y * 10 + c - 1], 0.0);
            for x in 0..10 {
                assert_eq!(g.gy[y * 10 + x], 0.0);
            }
        }
    }

    #[test]
    fn sobel_transpose_swaps_axes() {
        let img = random_gray(11, 7, 5);
        let g = sobel_gradients(&img).unwrap();
        let gt = sobel_gradients(&img.transpose()).unwrap();
        for y in 0..7 {
            for x in 0..11 {
                assert!((g.gx[y * 11 + x] - gt.gy[x * 7 + y]).abs() < 1e-3);
                assert!((g.gy[y * 11 + x] - gt.gx[x * 7 + y]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn sobel_too_small() {
        assert!(sobel_gradients(&GrayImage::filled(2, 5, 0.0)).is_err());
    }
}
