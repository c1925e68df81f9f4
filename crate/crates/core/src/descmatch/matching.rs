use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Descriptor;
use crate::error::{invalid, Error, Result};
use crate::imgcore::{Homography, Keypoint};

pub const DEFAULT_RATIO: f64 = 0.8;

/// One accepted nearest-neighbour match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f64,
    /// Nearest over second-nearest distance; 0 when `b` has a single descriptor.
    pub ratio: f64,
}

fn check_kinds(a: &[Descriptor], b: &[Descriptor]) -> Result<()> {
    let mut kinds = a.iter().chain(b).map(Descriptor::kind);
    if let Some(first) = kinds.next() {
        if let Some(other) = kinds.find(|k| *k != first) {
            return Err(invalid!("mixed descriptor kinds {first:?} and {other:?}"));
        }
    }
    Ok(())
}

/// Exhaustive nearest-neighbour search with the distance-ratio test, one match per `a`.
///
/// Ties go to the lowest `b` index. A query whose two nearest distances are both zero has an
/// undefined ratio and is rejected.
pub fn nndr_match(desc_a: &[Descriptor], desc_b: &[Descriptor], ratio_threshold: f64) -> Result<Vec<MatchPair>> {
    if !(ratio_threshold > 0.0 && ratio_threshold <= 1.0) {
        return Err(invalid!("ratio threshold must lie in (0, 1], got {ratio_threshold}"));
    }
    check_kinds(desc_a, desc_b)?;
    let found: Vec<Option<MatchPair>> = desc_a
        .par_iter()
        .enumerate()
        .map(|(ia, da)| {
            let mut best: Option<(usize, f64)> = None;
            let mut second: Option<f64> = None;
            for (ib, db) in desc_b.iter().enumerate() {
                let d = da.distance(db).expect("kinds checked");
                match best {
                    Some((_, bd)) if d >= bd => {
                        if second.map_or(true, |s| d < s) {
                            second = Some(d);
                        }
                    }
                    _ => {
                        if let Some((_, bd)) = best {
                            second = Some(bd);
                        }
                        best = Some((ib, d));
                    }
                }
            }
            let (ib, d1) = best?;
            let ratio = match second {
                None => 0.0,
                Some(d2) if d2 > 0.0 => d1 / d2,
                Some(_) => return None,
            };
            (second.is_none() || ratio < ratio_threshold).then_some(MatchPair {
                index_a: ia,
                index_b: ib,
                distance: d1,
                ratio,
            })
        })
        .collect();
    Ok(found.into_iter().flatten().collect())
}

/// Matches whose `a` keypoint, mapped by `h_gt`, lands strictly within `eps` of its `b` keypoint.
///
/// Points that map to infinity count as incorrect.
pub fn count_correct(
    matches: &[MatchPair],
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h_gt: &Homography,
    eps: f64,
) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(invalid!("eps must be positive, got {eps}"));
    }
    let mut n = 0;
    for m in matches {
        let (a, b) = match (kps_a.get(m.index_a), kps_b.get(m.index_b)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(invalid!(
                    "match ({}, {}) out of range for {} and {} keypoints",
                    m.index_a,
                    m.index_b,
                    kps_a.len(),
                    kps_b.len()
                ))
            }
        };
        if let Ok((x, y)) = h_gt.project(f64::from(a.x), f64::from(a.y)) {
            if (x - f64::from(b.x)).hypot(y - f64::from(b.y)) < eps {
                n += 1;
            }
        }
    }
    Ok(n)
}

const CSV_HEADER: &str = "ia,ib,distance,ratio";

pub fn matches_to_csv(matches: &[MatchPair]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for m in matches {
        writeln!(s, "{},{},{},{}", m.index_a, m.index_b, m.distance, m.ratio).expect("write to string");
    }
    s
}

pub fn matches_from_csv(text: &str) -> Result<Vec<MatchPair>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::Parse(format!("matches CSV must start with {CSV_HEADER:?}")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || Error::Parse(format!("matches CSV line {}: {line:?}", i + 2));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(MatchPair {
                index_a: f[0].parse().map_err(|_| bad())?,
                index_b: f[1].parse().map_err(|_| bad())?,
                distance: f[2].parse().map_err(|_| bad())?,
                ratio: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn write_matches_csv(matches: &[MatchPair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, matches_to_csv(matches)).map_err(|e| Error::io(path, e))
}

pub fn read_matches_csv(path: impl AsRef<Path>) -> Result<Vec<MatchPair>> {
    let path = path.as_ref();
    matches_from_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
