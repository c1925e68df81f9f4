use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_bounds, Descriptor};
use crate::error::Result;
use crate::imgcore::{gaussian_blur, GrayImage, Keypoint};

pub const BRIEF_BITS: usize = 256;
/// Side of the square sampling window.
pub const BRIEF_PATCH: usize = 31;
pub const BRIEF_SIGMA: f32 = 2.0;

/// 256 point pairs `((px, py), (qx, qy))` with offsets in `[-15, 15]`, fixed by `seed`.
pub fn brief_pattern(seed: u64) -> Vec<((i32, i32), (i32, i32))> {
    let half = (BRIEF_PATCH / 2) as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pt = || (rng.gen_range(-half..=half), rng.gen_range(-half..=half));
    (0..BRIEF_BITS).map(|_| (pt(), pt())).collect()
}

/// Binary intensity-comparison descriptors on a sigma-2 blurred image.
///
/// Bit `i` is set iff the blurred intensity at `p_i` is strictly greater than at `q_i`, sampled
/// around each keypoint's nearest pixel with reflect-101 borders.
pub fn brief_describe(img: &GrayImage, kps: &[Keypoint], seed: u64) -> Result<Vec<Descriptor>> {
    check_bounds(kps, img.width(), img.height())?;
    if kps.is_empty() {
        return Ok(Vec::new());
    }
    let blurred = gaussian_blur(img, BRIEF_SIGMA)?;
    let pattern = brief_pattern(seed);
    Ok(kps
        .par_iter()
        .map(|kp| {
            let (cx, cy) = (kp.x.round() as isize, kp.y.round() as isize);
            let at = |(dx, dy): (i32, i32)| blurred.get_reflect(cx + dx as isize, cy + dy as isize);
            let mut bits = [0u64; 4];
            for (i, &(p, q)) in pattern.iter().enumerate() {
                if at(p) > at(q) {
                    bits[i / 64] |= 1 << (i % 64);
                }
            }
            Descriptor::Binary { bits }
        })
        .collect())
}
