//! Brute-force references for the detectors and the label fusion.

use std::collections::BTreeSet;

use densekp::detectors::{edges_canny, edges_sobel, DetectorProfile, KeypointDetector};
use densekp::imgcore::{gaussian_blur, rgb_to_gray, BinaryMask, GrayImage, RgbImage};

/// Radius-3 ring, listed clockwise from the top.
const RING: [(i64, i64); 16] = [
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
];

/// Tries every start position and both polarities for a run of 9 contiguous ring pixels.
fn segment_test(img: &GrayImage, x: usize, y: usize, t: f32) -> bool {
    let c = img.get(x, y);
    let v: Vec<f32> = RING
        .iter()
        .map(|&(dx, dy)| img.get((x as i64 + dx) as usize, (y as i64 + dy) as usize))
        .collect();
    (0..16).any(|s| {
        (0..9).all(|k| v[(s + k) % 16] > c + t) || (0..9).all(|k| v[(s + k) % 16] < c - t)
    })
}

pub fn oracle_corners(img: &GrayImage, t: u32) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for y in 3..img.height() - 3 {
        for x in 3..img.width() - 3 {
            if segment_test(img, x, y, t as f32) {
                out.insert((x, y));
            }
        }
    }
    out
}

/// Twenty 64x64 images alternating raw noise and blurred noise.
pub fn corner_test_images() -> Vec<GrayImage> {
    (0..20)
        .map(|s| {
            let noise = super::random_gray(100 + s, 64, 64);
            if s % 2 == 0 { noise } else { gaussian_blur(&noise, 1.0).unwrap() }
        })
        .collect()
}

/// Exhaustive scan: above `rel_t * max`, and beats every other pixel in the window
/// (equal responses go to the earlier raster index).
pub fn oracle_maxima(resp: &[f32], w: usize, h: usize, rel_t: f32, r: usize) -> BTreeSet<(usize, usize)> {
    let max = resp.iter().copied().fold(f32::MIN, f32::max);
    let mut out = BTreeSet::new();
    if max <= 0.0 {
        return out;
    }
    for y in 0..h {
        for x in 0..w {
            let v = resp[y * w + x];
            if v <= rel_t * max {
                continue;
            }
            let mut best = true;
            for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    let u = resp[yy * w + xx];
                    let earlier = yy * w + xx < y * w + x;
                    if (yy, xx) != (y, x) && (u > v || (u == v && earlier)) {
                        best = false;
                    }
                }
            }
            if best {
                out.insert((x, y));
            }
        }
    }
    out
}

/// Label recomputed from scratch: each detector's pixels and each edge map, OR-ed pixel by pixel.
pub fn oracle_label(img: &RgbImage, p: &DetectorProfile) -> BinaryMask {
    let gray = rgb_to_gray(img);
    let (w, h) = (gray.width(), gray.height());
    let mut on = vec![false; w * h];
    for det in KeypointDetector::ALL {
        for k in det.detect(&gray, p).unwrap() {
            let (x, y) = (k.x.round() as usize, k.y.round() as usize);
            on[y * w + x] = true;
        }
    }
    for edges in [edges_canny(&gray, p).unwrap(), edges_sobel(&gray, p).unwrap()] {
        for y in 0..h {
            for x in 0..w {
                on[y * w + x] |= edges.get(x, y);
            }
        }
    }
    BinaryMask::from_fn(w, h, |x, y| on[y * w + x])
}
