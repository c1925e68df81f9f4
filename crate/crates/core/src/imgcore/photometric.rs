use rand::Rng;

use super::image::RgbImage;
use crate::error::{invalid, Result};

/// Contrast reduction about mid-gray plus a brightness offset:
/// `v -> clamp(round(alpha * (v - 128) + 128 + beta), 0, 255)`.
pub fn degrade_photometric(img: &RgbImage, alpha: f32, beta: f32) -> Result<RgbImage> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid!("alpha must lie in (0, 1], got {alpha}"));
    }
    if !(-128.0..=0.0).contains(&beta) {
        return Err(invalid!("beta must lie in [-128, 0], got {beta}"));
    }
    let lut: Vec<u8> = (0..=255u32)
        .map(|v| {
            let out = alpha as f64 * (v as f64 - 128.0) + 128.0 + beta as f64;
            out.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    let data = img.data().iter().map(|&v| lut[v as usize]).collect();
    RgbImage::new(img.width(), img.height(), data)
}

/// Draws `(alpha, beta)` for the low-visibility corpus: alpha ~ U(0.1, 0.4), beta ~ U(-100, -50).
pub fn sample_degradation<R: Rng>(rng: &mut R) -> (f32, f32) {
    (rng.gen_range(0.1..0.4), rng.gen_range(-100.0..-50.0))
}
