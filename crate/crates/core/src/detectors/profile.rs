use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Normal,
    Low,
}

impl std::str::FromStr for ProfileName {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(ProfileName::Normal),
            "low" => Ok(ProfileName::Low),
            other => Err(invalid!("unknown profile {other:?} (expected normal or low)")),
        }
    }
}

impl std::fmt::Display for ProfileName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProfileName::Normal => "normal",
            ProfileName::Low => "low",
        })
    }
}

/// Thresholds for every classical detector. Intensities are on the 0–255 scale and
/// gradient thresholds are in raw Sobel units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorProfile {
    pub name: ProfileName,
    pub fast_t: u32,
    pub harris_k: f32,
    pub harris_rel_t: f32,
    pub shi_rel_t: f32,
    pub dog_contrast_t: f32,
    pub dog_edge_r: f32,
    pub canny_lo: f32,
    pub canny_hi: f32,
    pub sobel_mag_t: f32,
    pub brisk_octaves: u32,
    pub orb_levels: u32,
    pub orb_scale: f32,
    pub nms_radius: u32,
}

impl DetectorProfile {
    pub fn normal() -> Self {
        Self {
            name: ProfileName::Normal,
            fast_t: 30,
            harris_k: 0.04,
            harris_rel_t: 0.01,
            shi_rel_t: 0.01,
            dog_contrast_t: 8.0,
            dog_edge_r: 10.0,
            canny_lo: 50.0,
            canny_hi: 150.0,
            sobel_mag_t: 600.0,
            brisk_octaves: 3,
            orb_levels: 4,
            orb_scale: 1.2,
            nms_radius: 3,
        }
    }

    pub fn low() -> Self {
        Self {
            name: ProfileName::Low,
            fast_t: 5,
            harris_rel_t: 1e-4,
            shi_rel_t: 1e-4,
            dog_contrast_t: 0.5,
            dog_edge_r: 20.0,
            canny_lo: 5.0,
            canny_hi: 15.0,
            sobel_mag_t: 100.0,
            nms_radius: 1,
            ..Self::normal()
        }
    }

    pub fn named(name: ProfileName) -> Self {
        match name {
            ProfileName::Normal => Self::normal(),
            ProfileName::Low => Self::low(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let floats = [
            ("harris_k", self.harris_k),
            ("harris_rel_t", self.harris_rel_t),
            ("shi_rel_t", self.shi_rel_t),
            ("dog_contrast_t", self.dog_contrast_t),
            ("dog_edge_r", self.dog_edge_r),
            ("canny_lo", self.canny_lo),
            ("canny_hi", self.canny_hi),
            ("sobel_mag_t", self.sobel_mag_t),
        ];
        for (field, v) in floats {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid!("profile field {field} must be finite and >= 0, got {v}"));
            }
        }
        if self.canny_lo > self.canny_hi {
            return Err(invalid!("canny_lo {} exceeds canny_hi {}", self.canny_lo, self.canny_hi));
        }
        if self.dog_edge_r <= 0.0 {
            return Err(invalid!("dog_edge_r must be positive"));
        }
        if !(self.orb_scale > 1.0) {
            return Err(invalid!("orb_scale must exceed 1, got {}", self.orb_scale));
        }
        if self.orb_levels == 0 || self.brisk_octaves == 0 {
            return Err(invalid!("orb_levels and brisk_octaves must be >= 1"));
        }
        Ok(())
    }
}

impl Default for DetectorProfile {
    fn default() -> Self {
        Self::normal()
    }
}
