//! Difference-of-Gaussians blob detector (the SIFT detection stage).

use super::profile::DetectorProfile;
use crate::error::{invalid, Result};
use crate::imgcore::{gaussian_blur, GrayImage, Keypoint, KeypointList};

pub const OCTAVES: usize = 3;
pub const SCALES_PER_OCTAVE: usize = 3;
pub const SIGMA0: f32 = 1.6;

/// Per-octave DoG stack; `dogs[i] = gauss[i + 1] - gauss[i]` with `gauss[i]` at
/// `SIGMA0 * k^i` in octave-local pixels.
#[derive(Debug, Clone)]
pub struct DogOctave {
    pub octave: usize,
    pub width: usize,
    pub height: usize,
    pub dogs: Vec<Vec<f32>>,
}

pub fn scale_step() -> f32 {
    2f32.powf(1.0 / SCALES_PER_OCTAVE as f32)
}

/// Detection sigma (base-resolution pixels) of DoG layer `s` in `octave`.
pub fn layer_sigma(octave: usize, s: usize) -> f32 {
    SIGMA0 * scale_step().powi(s as i32) * (1 << octave) as f32
}

fn downsample2(img: &GrayImage) -> GrayImage {
    let w = img.width().div_ceil(2);
    let h = img.height().div_ceil(2);
    GrayImage::from_fn(w, h, |x, y| img.get(2 * x, 2 * y))
}

pub fn dog_pyramid(img: &GrayImage) -> Result<Vec<DogOctave>> {
    if img.width().min(img.height()) < 32 {
        return Err(invalid!(
            "DoG detector needs min dimension >= 32, got {}x{}",
            img.width(),
            img.height()
        ));
    }
    let k = scale_step();
    let levels = SCALES_PER_OCTAVE + 3;
    let mut octaves = Vec::with_capacity(OCTAVES);
    let mut base = gaussian_blur(img, SIGMA0)?;
    for o in 0..OCTAVES {
        let mut gauss = Vec::with_capacity(levels);
        gauss.push(base.clone());
        for i in 1..levels {
            let prev = SIGMA0 * k.powi(i as i32 - 1);
            let cur = SIGMA0 * k.powi(i as i32);
            let inc = (cur * cur - prev * prev).sqrt();
            let next = gaussian_blur(&gauss[i - 1], inc)?;
            gauss.push(next);
        }
        let dogs = gauss
            .windows(2)
            .map(|p| p[1].data().iter().zip(p[0].data()).map(|(a, b)| a - b).collect())
            .collect();
        octaves.push(DogOctave {
            octave: o,
            width: base.width(),
            height: base.height(),
            dogs,
        });
        // gauss[SCALES_PER_OCTAVE] carries twice the octave's base sigma.
        base = downsample2(&gauss[SCALES_PER_OCTAVE]);
    }
    Ok(octaves)
}

/// Strict extremum of `layer[s]` at `(x, y)` over its 26 scale-space neighbours.
pub fn is_extremum(oct: &DogOctave, s: usize, x: usize, y: usize) -> bool {
    let w = oct.width;
    let v = oct.dogs[s][y * w + x];
    let (mut is_max, mut is_min) = (true, true);
    for ds in 0..3 {
        let layer = &oct.dogs[s + ds - 1];
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if ds == 1 && xx == x && yy == y {
                    continue;
                }
                let n = layer[yy * w + xx];
                is_max &= v > n;
                is_min &= v < n;
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    is_max || is_min
}

/// Principal-curvature test: `tr^2 / det < (r + 1)^2 / r` with a positive determinant.
pub fn passes_edge_test(oct: &DogOctave, s: usize, x: usize, y: usize, r: f32) -> bool {
    let w = oct.width;
    let d = &oct.dogs[s];
    let at = |xx: usize, yy: usize| d[yy * w + xx] as f64;
    let c = at(x, y);
    let dxx = at(x + 1, y) + at(x - 1, y) - 2.0 * c;
    let dyy = at(x, y + 1) + at(x, y - 1) - 2.0 * c;
    let dxy = 0.25 * (at(x + 1, y + 1) - at(x - 1, y + 1) - at(x + 1, y - 1) + at(x - 1, y - 1));
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    let r = r as f64;
    det > 0.0 && tr * tr * r < (r + 1.0) * (r + 1.0) * det
}

pub fn detect_dog(img: &GrayImage, profile: &DetectorProfile) -> Result<KeypointList> {
    let pyramid = dog_pyramid(img)?;
    let mut out = Vec::new();
    for oct in &pyramid {
        if oct.width < 3 || oct.height < 3 {
            continue;
        }
        let factor = (1usize << oct.octave) as f32;
        for s in 1..=SCALES_PER_OCTAVE {
            for y in 1..oct.height - 1 {
                for x in 1..oct.width - 1 {
                    let v = oct.dogs[s][y * oct.width + x];
                    if v.abs() <= profile.dog_contrast_t {
                        continue;
                    }
                    if !is_extremum(oct, s, x, y) || !passes_edge_test(oct, s, x, y, profile.dog_edge_r) {
                        continue;
                    }
                    out.push(Keypoint {
                        x: x as f32 * factor,
                        y: y as f32 * factor,
                        score: v.abs(),
                        scale: layer_sigma(oct.octave, s),
                    });
                }
            }
        }
    }
    Ok(out)
}
