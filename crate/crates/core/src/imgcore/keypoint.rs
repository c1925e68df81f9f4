use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SCALE: f32 = 8.0;

/// A detected location in pixel coordinates (x = column, y = row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    /// Detector response; 0 when the detector has none.
    pub score: f32,
    /// Patch radius hint in pixels.
    pub scale: f32,
}

pub type KeypointList = Vec<Keypoint>;

impl Keypoint {
    pub fn new(x: f32, y: f32) -> Self {
        Self {
            x,
            y,
            score: 0.0,
            scale: DEFAULT_SCALE,
        }
    }

    pub fn with_score(x: f32, y: f32, score: f32) -> Self {
        Self {
            x,
            y,
            score,
            scale: DEFAULT_SCALE,
        }
    }

    pub fn in_bounds(&self, width: usize, height: usize) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x < width as f32 && self.y < height as f32
    }
}

const CSV_HEADER: &str = "x,y,score,scale";

/// `x,y,score,scale` with six decimals per field.
pub fn keypoints_to_csv(kps: &[Keypoint]) -> String {
    let mut out = String::with_capacity(32 * (kps.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for k in kps {
        let _ = writeln!(out, "{:.6},{:.6},{:.6},{:.6}", k.x, k.y, k.score, k.scale);
    }
    out
}

pub fn keypoints_from_csv(text: &str) -> Result<KeypointList> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(Error::Parse(format!("expected keypoint CSV header, found {other:?}"))),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let fields: Vec<f32> = line
                .split(',')
                .map(|f| f.trim().parse::<f32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("keypoint row {}: {e}", i + 2)))?;
            match fields.as_slice() {
                &[x, y, score, scale] => Ok(Keypoint { x, y, score, scale }),
                _ => Err(Error::Parse(format!("keypoint row {} has {} fields", i + 2, fields.len()))),
            }
        })
        .collect()
}

pub fn write_keypoints_csv(kps: &[Keypoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, keypoints_to_csv(kps)).map_err(|e| Error::io(path, e))
}

pub fn read_keypoints_csv(path: impl AsRef<Path>) -> Result<KeypointList> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    keypoints_from_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_only_when_empty() {
        assert_eq!(keypoints_to_csv(&[]), "x,y,score,scale\n");
        assert!(keypoints_from_csv("x,y,score,scale\n").unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(keypoints_from_csv("a,b\n").is_err());
        assert!(keypoints_from_csv("x,y,score,scale\n1,2,3\n").is_err());
        assert!(keypoints_from_csv("x,y,score,scale\n1,2,z,4\n").is_err());
    }

    proptest! {
        // Fixed-point text is the canonical form: one parse brings values onto the
        // six-decimal grid, after which write/parse is byte-stable.
        #[test]
        fn csv_round_trip(pts in prop::collection::vec((0f32..2000.0, 0f32..2000.0, -1e4f32..1e4, 0.5f32..64.0), 0..40)) {
            let kps: Vec<Keypoint> = pts.iter().map(|&(x, y, score, scale)| Keypoint { x, y, score, scale }).collect();
            let text = keypoints_to_csv(&kps);
            let parsed = keypoints_from_csv(&text).unwrap();
            prop_assert_eq!(parsed.len(), kps.len());
            for (a, b) in parsed.iter().zip(&kps) {
                prop_assert!((a.x - b.x).abs() <= 1e-3 && (a.y - b.y).abs() <= 1e-3);
                prop_assert!((a.score - b.score).abs() <= 1e-2 && (a.scale - b.scale).abs() <= 1e-3);
            }
            prop_assert_eq!(keypoints_to_csv(&parsed), text);
        }
    }
}
