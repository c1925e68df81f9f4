use std::f32::consts::TAU;

use rayon::prelude::*;

use super::{check_bounds, Descriptor};
use crate::error::Result;
use crate::imgcore::{GrayImage, Keypoint};

/// Samples per patch side.
const GRID: usize = 16;
/// Spatial cells per side and orientation bins per cell.
const CELLS: usize = 4;
const ORI_BINS: usize = 8;
pub const SIFT_LEN: usize = CELLS * CELLS * ORI_BINS;
const CLAMP: f32 = 0.2;
const HIST_BINS: usize = 36;
/// Gradient magnitudes below this (intensity units per pixel) are interpolation noise.
const GRAD_EPS: f32 = 1e-3;

/// A keypoint's sampling frame: sample `(i, j)` of the grid sits at `center + R(theta) * offset`.
struct Frame {
    cx: f32,
    cy: f32,
    step: f32,
    cos: f32,
    sin: f32,
}

impl Frame {
    fn new(kp: &Keypoint, theta: f32) -> Self {
        // Patch width is 2 * scale, split into GRID samples.
        let step = 2.0 * kp.scale.max(1e-3) / GRID as f32;
        Self {
            cx: kp.x,
            cy: kp.y,
            step,
            cos: theta.cos(),
            sin: theta.sin(),
        }
    }

    /// Offset of grid sample `i` along one axis, in patch units centered on the keypoint.
    fn offset(i: usize) -> f32 {
        i as f32 + 0.5 - GRID as f32 / 2.0
    }

    /// Gradient at grid sample `(i, j)` expressed in the rotated frame, by central differences.
    fn gradient(&self, img: &GrayImage, i: usize, j: usize) -> (f32, f32) {
        let (u, v) = (Self::offset(i) * self.step, Self::offset(j) * self.step);
        let x = self.cx + self.cos * u - self.sin * v;
        let y = self.cy + self.sin * u + self.cos * v;
        let h = self.step;
        let along_u = sample(img, x + self.cos * h, y + self.sin * h) - sample(img, x - self.cos * h, y - self.sin * h);
        let along_v = sample(img, x - self.sin * h, y + self.cos * h) - sample(img, x + self.sin * h, y - self.cos * h);
        (along_u / (2.0 * h), along_v / (2.0 * h))
    }
}

fn sample(img: &GrayImage, x: f32, y: f32) -> f32 {
    img.sample_bilinear(x, y)
}

/// Gaussian weight of grid sample `(i, j)` with sigma equal to half the patch width.
fn weight(i: usize, j: usize) -> f32 {
    let sigma = GRID as f32 / 2.0;
    let (u, v) = (Frame::offset(i), Frame::offset(j));
    (-(u * u + v * v) / (2.0 * sigma * sigma)).exp()
}

/// Peak of the 36-bin magnitude-weighted gradient orientation histogram, in radians.
pub fn dominant_orientation(img: &GrayImage, kp: &Keypoint) -> f32 {
    let frame = Frame::new(kp, 0.0);
    let mut hist = [0f32; HIST_BINS];
    for j in 0..GRID {
        for i in 0..GRID {
            let (gx, gy) = frame.gradient(img, i, j);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag < GRAD_EPS {
                continue;
            }
            let bin = (gy.atan2(gx).rem_euclid(TAU) / TAU * HIST_BINS as f32).floor() as usize % HIST_BINS;
            hist[bin] += mag * weight(i, j);
        }
    }
    let smoothed: Vec<f32> = (0..HIST_BINS)
        .map(|b| {
            let prev = hist[(b + HIST_BINS - 1) % HIST_BINS];
            let next = hist[(b + 1) % HIST_BINS];
            0.25 * prev + 0.5 * hist[b] + 0.25 * next
        })
        .collect();
    let (peak, &top) = smoothed
        .iter()
        .enumerate()
        .fold((0, &f32::MIN), |best, cur| if cur.1 > best.1 { cur } else { best });
    if top <= 0.0 {
        return 0.0;
    }
    let l = smoothed[(peak + HIST_BINS - 1) % HIST_BINS];
    let r = smoothed[(peak + 1) % HIST_BINS];
    let denom = l - 2.0 * top + r;
    let shift = if denom.abs() > f32::EPSILON { 0.5 * (l - r) / denom } else { 0.0 };
    ((peak as f32 + 0.5 + shift) / HIST_BINS as f32 * TAU).rem_euclid(TAU)
}

fn describe_one(img: &GrayImage, kp: &Keypoint, oriented: bool) -> Descriptor {
    let theta = if oriented { dominant_orientation(img, kp) } else { 0.0 };
    let frame = Frame::new(kp, theta);
    let mut hist = [0f32; SIFT_LEN];
    let cell = (GRID / CELLS) as f32;
    for j in 0..GRID {
        for i in 0..GRID {
            let (gx, gy) = frame.gradient(img, i, j);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag < GRAD_EPS {
                continue;
            }
            let w = mag * weight(i, j);
            // Continuous cell and orientation coordinates, bin centers at integers.
            let cx = (i as f32 + 0.5) / cell - 0.5;
            let cy = (j as f32 + 0.5) / cell - 0.5;
            let co = gy.atan2(gx).rem_euclid(TAU) / TAU * ORI_BINS as f32;
            let (x0, y0, o0) = (cx.floor(), cy.floor(), co.floor());
            let (fx, fy, fo) = (cx - x0, cy - y0, co - o0);
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                let yb = y0 as isize + dy;
                if !(0..CELLS as isize).contains(&yb) {
                    continue;
                }
                for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let xb = x0 as isize + dx;
                    if !(0..CELLS as isize).contains(&xb) {
                        continue;
                    }
                    for (dor, wo) in [(0, 1.0 - fo), (1, fo)] {
                        let ob = (o0 as usize + dor) % ORI_BINS;
                        hist[(yb as usize * CELLS + xb as usize) * ORI_BINS + ob] += w * wx * wy * wo;
                    }
                }
            }
        }
    }
    finish(hist)
}

fn l2_normalize(v: &mut [f32]) -> bool {
    let n = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if n < 1e-12 {
        return false;
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / n) as f32;
    }
    true
}

/// Rescales `v` (unit norm) so every entry is at most `CLAMP` while keeping unit norm.
///
/// This is the fixed point of repeated clamp-and-renormalize: the largest `k` entries sit at
/// the cap and the rest share one scale factor. When fewer than 25 entries are non-zero no
/// such point exists (25 * 0.2^2 = 1) and a single clamp pass is applied instead.
fn cap_components(v: &mut [f32]) {
    let cap = f64::from(CLAMP);
    let mut sorted: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut rest: f64 = sorted.iter().map(|x| x * x).sum();
    for (k, &top) in sorted.iter().enumerate() {
        let budget = 1.0 - k as f64 * cap * cap;
        if budget <= 0.0 || rest <= 0.0 {
            break;
        }
        let c = (budget / rest).sqrt();
        if c * top <= cap {
            for x in v.iter_mut() {
                *x = (f64::from(*x) * c).min(cap) as f32;
            }
            return;
        }
        rest -= top * top;
    }
    for x in v.iter_mut() {
        *x = x.min(CLAMP);
    }
    l2_normalize(v);
}

fn finish(mut hist: [f32; SIFT_LEN]) -> Descriptor {
    if !l2_normalize(&mut hist) {
        return Descriptor::Float {
            values: vec![0.0; SIFT_LEN],
            degenerate: true,
        };
    }
    cap_components(&mut hist);
    Descriptor::Float {
        values: hist.to_vec(),
        degenerate: false,
    }
}

/// 128-d gradient histograms on a 16x16 grid spanning `2 * scale` pixels around each keypoint.
///
/// With `oriented`, the grid is first rotated to the dominant gradient orientation.
pub fn sift_describe(img: &GrayImage, kps: &[Keypoint], oriented: bool) -> Result<Vec<Descriptor>> {
    check_bounds(kps, img.width(), img.height())?;
    Ok(kps.par_iter().map(|kp| describe_one(img, kp, oriented)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as f32, y as f32);
            128.0 + 60.0 * (0.31 * x + 0.17 * y * y / 10.0).sin() + 40.0 * (0.23 * y - 0.05 * x * x / 7.0).cos()
        })
    }

    fn values(d: &Descriptor) -> &[f32] {
        match d {
            Descriptor::Float { values, .. } => values,
            _ => panic!("float descriptor expected"),
        }
    }

    #[test]
    fn constant_is_degenerate() {
        let img = GrayImage::filled(32, 32, 77.0);
        let d = sift_describe(&img, &[Keypoint::new(16.0, 16.0)], false).unwrap();
        assert_eq!(d[0], Descriptor::Float { values: vec![0.0; 128], degenerate: true });
    }

    #[test]
    fn unit_norm_and_clamped() {
        let img = texture(48, 40);
        let kps: Vec<Keypoint> = [(5.0, 5.0), (20.0, 18.0), (47.0, 39.0), (0.0, 12.0)]
            .iter()
            .map(|&(x, y)| Keypoint::new(x, y))
            .collect();
        for oriented in [false, true] {
            for d in sift_describe(&img, &kps, oriented).unwrap() {
                let v = values(&d);
                let n: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
                assert!((n - 1.0).abs() < 1e-5);
                assert!(v.iter().all(|&x| (0.0..=0.2 + 1e-6).contains(&x)));
            }
        }
    }

    #[test]
    fn cap_fixed_point() {
        let mut v = [0f32; SIFT_LEN];
        for (i, x) in v.iter_mut().enumerate().take(40) {
            *x = 1.0 + (i * i) as f32;
        }
        l2_normalize(&mut v);
        cap_components(&mut v);
        let n: f64 = v.iter().map(|&x| f64::from(x).powi(2)).sum();
        assert!((n - 1.0).abs() < 1e-6);
        assert!(v.iter().all(|&x| x <= CLAMP + 1e-6));
        // Order is preserved.
        assert!(v[..40].windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn empty_and_out_of_bounds() {
        let img = texture(20, 20);
        assert!(sift_describe(&img, &[], false).unwrap().is_empty());
        assert!(sift_describe(&img, &[Keypoint::new(20.0, 3.0)], false).is_err());
    }

    #[test]
    fn deterministic() {
        let img = texture(40, 40);
        let kps = [Keypoint::new(17.0, 21.0)];
        assert_eq!(sift_describe(&img, &kps, true).unwrap(), sift_describe(&img, &kps, true).unwrap());
    }
}
