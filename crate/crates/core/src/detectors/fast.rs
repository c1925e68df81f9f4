//! FAST-9 segment test and its AGAST-style accelerated twin.
//!
//! Both detectors share the criterion: at least 9 contiguous pixels of the radius-3
//! Bresenham circle are all brighter than `center + t` or all darker than `center - t`.
//! The score is the sum of absolute contrast over that contiguous arc.

use std::sync::OnceLock;

use super::nms::{suppress, Candidate};
use super::profile::DetectorProfile;
use crate::error::{invalid, Result};
use crate::imgcore::{GrayImage, Keypoint, KeypointList};

pub const ARC_LENGTH: usize = 9;

/// Circle offsets, clockwise from 12 o'clock.
pub const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

const BORDER: usize = 3;

fn check_size(img: &GrayImage) -> Result<()> {
    if img.width() < 7 || img.height() < 7 {
        return Err(invalid!(
            "segment test needs at least 7x7 pixels, got {}x{}",
            img.width(),
            img.height()
        ));
    }
    Ok(())
}

#[inline]
fn circle_values(img: &GrayImage, x: usize, y: usize) -> [f32; 16] {
    let mut v = [0f32; 16];
    for (i, &(dx, dy)) in CIRCLE.iter().enumerate() {
        v[i] = img.get((x as isize + dx) as usize, (y as isize + dy) as usize);
    }
    v
}

/// Sum of `|v - center|` over the contiguous run of set bits that is at least
/// `ARC_LENGTH` long, or `None` when no such run exists.
fn arc_score(mask: u16, ring: &[f32; 16], center: f32) -> Option<f32> {
    if mask == 0xFFFF {
        return Some(ring.iter().map(|v| (v - center).abs()).sum());
    }
    // Start scanning right after a cleared bit so that no run wraps past the start.
    let start = (0..16).find(|&i| mask & (1 << i) == 0)?;
    let mut run_len = 0;
    let mut run_sum = 0f32;
    for step in 1..=16 {
        let i = (start + step) % 16;
        if mask & (1 << i) != 0 {
            run_len += 1;
            run_sum += (ring[i] - center).abs();
        } else {
            if run_len >= ARC_LENGTH {
                return Some(run_sum);
            }
            run_len = 0;
            run_sum = 0.0;
        }
    }
    (run_len >= ARC_LENGTH).then_some(run_sum)
}

#[inline]
fn class_masks(ring: &[f32; 16], center: f32, t: f32) -> (u16, u16) {
    let (mut bright, mut dark) = (0u16, 0u16);
    for (i, &v) in ring.iter().enumerate() {
        if v > center + t {
            bright |= 1 << i;
        } else if v < center - t {
            dark |= 1 << i;
        }
    }
    (bright, dark)
}

/// Segment-test score of one pixel (0 when it is not a corner or too close to the border).
pub fn segment_score(img: &GrayImage, x: usize, y: usize, t: u32) -> f32 {
    if x < BORDER || y < BORDER || x + BORDER >= img.width() || y + BORDER >= img.height() {
        return 0.0;
    }
    let center = img.get(x, y);
    let ring = circle_values(img, x, y);
    let (bright, dark) = class_masks(&ring, center, t as f32);
    arc_score(bright, &ring, center)
        .or_else(|| arc_score(dark, &ring, center))
        .unwrap_or(0.0)
}

/// All segment-test corners before suppression, in raster order.
pub fn fast_candidates(img: &GrayImage, t: u32) -> Result<Vec<Candidate>> {
    check_size(img)?;
    let mut out = Vec::new();
    for y in BORDER..img.height() - BORDER {
        for x in BORDER..img.width() - BORDER {
            let score = segment_score(img, x, y, t);
            if score > 0.0 {
                out.push(Candidate { x, y, score });
            }
        }
    }
    Ok(out)
}

/// Lookup table: `ARC_TABLE[mask]` is true when `mask` holds >= 9 cyclically contiguous bits.
fn arc_table() -> &'static [bool] {
    static TABLE: OnceLock<Vec<bool>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..=u16::MAX as u32)
            .map(|m| {
                let m = m as u16;
                if m == 0xFFFF {
                    return true;
                }
                let mut best = 0;
                let mut run = 0;
                for i in 0..32 {
                    if m & (1 << (i % 16)) != 0 {
                        run += 1;
                        best = best.max(run);
                    } else {
                        run = 0;
                    }
                }
                best >= ARC_LENGTH
            })
            .collect()
    })
}

/// Accelerated candidates: a cardinal-point pretest followed by a precomputed arc table.
/// Produces exactly the same set as [`fast_candidates`].
pub fn agast_candidates(img: &GrayImage, t: u32) -> Result<Vec<Candidate>> {
    check_size(img)?;
    let table = arc_table();
    let tf = t as f32;
    let w = img.width();
    let data = img.data();
    let offsets: Vec<isize> = CIRCLE.iter().map(|&(dx, dy)| dy * w as isize + dx).collect();
    let mut out = Vec::new();
    for y in BORDER..img.height() - BORDER {
        for x in BORDER..w - BORDER {
            let idx = (y * w + x) as isize;
            let c = data[idx as usize];
            let hi = c + tf;
            let lo = c - tf;
            // Stage 1: any 9-arc covers at least two of the four cardinal points.
            let mut nb = 0;
            let mut nd = 0;
            for k in [0usize, 4, 8, 12] {
                let v = data[(idx + offsets[k]) as usize];
                nb += (v > hi) as u32;
                nd += (v < lo) as u32;
            }
            if nb < 2 && nd < 2 {
                continue;
            }
            // Stage 2: full ring classification and table lookup.
            let mut ring = [0f32; 16];
            for (r, &o) in ring.iter_mut().zip(&offsets) {
                *r = data[(idx + o) as usize];
            }
            let (bright, dark) = class_masks(&ring, c, tf);
            let mask = if nb >= 2 && table[bright as usize] {
                bright
            } else if nd >= 2 && table[dark as usize] {
                dark
            } else {
                continue;
            };
            let score = arc_score(mask, &ring, c).expect("table guarantees an arc");
            out.push(Candidate { x, y, score });
        }
    }
    Ok(out)
}

pub(crate) fn to_keypoints(cands: &[Candidate]) -> KeypointList {
    cands
        .iter()
        .map(|c| Keypoint::with_score(c.x as f32, c.y as f32, c.score))
        .collect()
}

pub fn detect_fast(img: &GrayImage, profile: &DetectorProfile) -> Result<KeypointList> {
    let cands = fast_candidates(img, profile.fast_t)?;
    let kept = suppress(img.width(), img.height(), &cands, profile.nms_radius as usize);
    Ok(to_keypoints(&kept))
}

pub fn detect_agast(img: &GrayImage, profile: &DetectorProfile) -> Result<KeypointList> {
    let cands = agast_candidates(img, profile.fast_t)?;
    let kept = suppress(img.width(), img.height(), &cands, profile.nms_radius as usize);
    Ok(to_keypoints(&kept))
}
