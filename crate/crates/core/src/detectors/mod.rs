//! Classical keypoint detectors (FAST, AGAST, Harris, Shi-Tomasi, DoG, ORB and BRISK
//! detection stages) and edge detectors (Canny, Sobel).
//!
//! All detectors are deterministic pure functions of `(image, profile)` and report
//! integer or pyramid-scaled coordinates without sub-pixel refinement.

mod dog;
mod edges;
mod fast;
mod harris;
mod nms;
mod profile;
mod pyramid;

use serde::{Deserialize, Serialize};

pub use dog::{detect_dog, dog_pyramid, is_extremum, layer_sigma, passes_edge_test, scale_step, DogOctave};
pub use edges::{edges_canny, edges_sobel, quantize_direction};
pub use fast::{agast_candidates, detect_agast, detect_fast, fast_candidates, segment_score, ARC_LENGTH, CIRCLE};
pub use harris::{
    detect_harris, detect_shi_tomasi, harris_response, min_eigen_response, structure_tensor, StructureTensor,
};
pub use nms::{suppress, Candidate};
pub use profile::{DetectorProfile, ProfileName};
pub use pyramid::{
    brisk_layers, brisk_score_maps, detect_brisk, detect_brisk_layered, detect_orb, neighbor_patch_max, ScaleLayer,
};

use crate::error::{invalid, Result};
use crate::imgcore::{EdgeMap, GrayImage, KeypointList};

/// The keypoint detector set used for label fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeypointDetector {
    SiftDog,
    Orb,
    Brisk,
    Fast,
    Agast,
    Harris,
    ShiTomasi,
}

impl KeypointDetector {
    pub const ALL: [KeypointDetector; 7] = [
        KeypointDetector::SiftDog,
        KeypointDetector::Orb,
        KeypointDetector::Brisk,
        KeypointDetector::Fast,
        KeypointDetector::Agast,
        KeypointDetector::Harris,
        KeypointDetector::ShiTomasi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KeypointDetector::SiftDog => "sift-dog",
            KeypointDetector::Orb => "orb",
            KeypointDetector::Brisk => "brisk",
            KeypointDetector::Fast => "fast",
            KeypointDetector::Agast => "agast",
            KeypointDetector::Harris => "harris",
            KeypointDetector::ShiTomasi => "shi-tomasi",
        }
    }

    pub fn detect(self, img: &GrayImage, profile: &DetectorProfile) -> Result<KeypointList> {
        match self {
            KeypointDetector::SiftDog => detect_dog(img, profile),
            KeypointDetector::Orb => detect_orb(img, profile),
            KeypointDetector::Brisk => detect_brisk(img, profile),
            KeypointDetector::Fast => detect_fast(img, profile),
            KeypointDetector::Agast => detect_agast(img, profile),
            KeypointDetector::Harris => detect_harris(img, profile),
            KeypointDetector::ShiTomasi => detect_shi_tomasi(img, profile),
        }
    }
}

impl std::str::FromStr for KeypointDetector {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        KeypointDetector::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| invalid!("unknown detector {s:?}"))
    }
}

impl std::fmt::Display for KeypointDetector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeDetector {
    Canny,
    Sobel,
}

impl EdgeDetector {
    pub const ALL: [EdgeDetector; 2] = [EdgeDetector::Canny, EdgeDetector::Sobel];

    pub fn detect(self, img: &GrayImage, profile: &DetectorProfile) -> Result<EdgeMap> {
        match self {
            EdgeDetector::Canny => edges_canny(img, profile),
            EdgeDetector::Sobel => edges_sobel(img, profile),
        }
    }
}
