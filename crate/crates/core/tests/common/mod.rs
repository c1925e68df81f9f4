//! Synthetic fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;

use std::path::Path;

use densekp::fusion::{build_label, select_profile, LabeledSample};
use densekp::imgcore::{save_image, save_mask, GrayImage, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Flat-shaded rectangles and discs over a smooth background.
pub fn synthetic_scene(seed: u64, w: usize, h: usize) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: [f32; 3] = [rng.gen_range(60.0..140.0), rng.gen_range(60.0..140.0), rng.gen_range(60.0..140.0)];
    let mut px: Vec<[f32; 3]> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f32, (i / w) as f32);
            let t = 20.0 * (x / w as f32) + 15.0 * (y / h as f32);
            [base[0] + t, base[1] + t, base[2] - t]
        })
        .collect();
    let shapes = rng.gen_range(4..8);
    for _ in 0..shapes {
        let color = [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)];
        let cx = rng.gen_range(0.0..w as f32);
        let cy = rng.gen_range(0.0..h as f32);
        let r = rng.gen_range(4.0..(w.min(h) as f32 / 3.0));
        let disc = rng.gen_bool(0.4);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                let inside = if disc {
                    dx * dx + dy * dy <= r * r
                } else {
                    dx.abs() <= r && dy.abs() <= 0.6 * r
                };
                if inside {
                    px[y * w + x] = color;
                }
            }
        }
    }
    RgbImage::from_fn(w, h, |x, y| {
        let p = px[y * w + x];
        [p[0].clamp(0.0, 255.0) as u8, p[1].clamp(0.0, 255.0) as u8, p[2].clamp(0.0, 255.0) as u8]
    })
}

/// Uniform random gray image in `[0, 255]`.
pub fn random_gray(seed: u64, w: usize, h: usize) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::from_fn(w, h, |_, _| rng.gen_range(0..=255) as f32)
}

/// Writes `n` synthetic images with their fused labels under `dir`.
pub fn toy_corpus(dir: &Path, n: usize, size: usize, seed: u64) -> Vec<LabeledSample> {
    std::fs::create_dir_all(dir).unwrap();
    (0..n)
        .map(|i| {
            let img = synthetic_scene(seed + i as u64, size, size);
            let profile = select_profile(&img, None);
            let label = build_label(&img, &profile).unwrap();
            let image_path = dir.join(format!("img{i}.ppm"));
            let mask_path = dir.join(format!("mask{i}.pgm"));
            save_image(&img, &image_path).unwrap();
            save_mask(&label, &mask_path).unwrap();
            LabeledSample {
                image_path,
                mask_path,
                profile_used: profile.name,
                degraded: false,
            }
        })
        .collect()
}
