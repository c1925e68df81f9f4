//! Local descriptors, ratio-test matching, and homography verification.

mod brief;
mod matching;
mod ransac;
mod sift;

pub use brief::{brief_describe, brief_pattern, BRIEF_BITS, BRIEF_PATCH, BRIEF_SIGMA};
pub use matching::{
    count_correct, matches_from_csv, matches_to_csv, nndr_match, read_matches_csv, write_matches_csv, MatchPair,
    DEFAULT_RATIO,
};
pub use ransac::{fit_homography_dlt, ransac_homography, RansacResult};
pub use sift::{dominant_orientation, sift_describe, SIFT_LEN};

use crate::error::{invalid, Result};
use crate::imgcore::Keypoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorKind {
    Float128,
    Binary256,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Descriptor {
    /// Unit-length gradient histogram, or all zeros when `degenerate`.
    Float { values: Vec<f32>, degenerate: bool },
    /// 256 comparison bits, least significant bit of word 0 first.
    Binary { bits: [u64; 4] },
}

impl Descriptor {
    pub fn kind(&self) -> DescriptorKind {
        match self {
            Descriptor::Float { .. } => DescriptorKind::Float128,
            Descriptor::Binary { .. } => DescriptorKind::Binary256,
        }
    }

    /// L2 distance for float descriptors, Hamming distance for binary ones.
    pub fn distance(&self, other: &Descriptor) -> Result<f64> {
        match (self, other) {
            (Descriptor::Float { values: a, .. }, Descriptor::Float { values: b, .. }) => Ok(a
                .iter()
                .zip(b)
                .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
                .sum::<f64>()
                .sqrt()),
            (Descriptor::Binary { bits: a }, Descriptor::Binary { bits: b }) => {
                Ok(a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum::<u32>() as f64)
            }
            _ => Err(invalid!("cannot compare {:?} with {:?} descriptors", self.kind(), other.kind())),
        }
    }

    pub fn bit(&self, i: usize) -> Option<bool> {
        match self {
            Descriptor::Binary { bits } if i < BRIEF_BITS => Some(bits[i / 64] >> (i % 64) & 1 == 1),
            _ => None,
        }
    }
}

pub(crate) fn check_bounds(kps: &[Keypoint], width: usize, height: usize) -> Result<()> {
    if let Some((i, k)) = kps.iter().enumerate().find(|(_, k)| !k.in_bounds(width, height)) {
        return Err(invalid!(
            "keypoint #{i} at ({}, {}) lies outside the {width}x{height} image",
            k.x,
            k.y
        ));
    }
    Ok(())
}
