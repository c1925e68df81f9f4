use nalgebra::{DMatrix, Matrix3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::MatchPair;
use crate::error::{invalid, Error, Result};
use crate::imgcore::{Homography, Keypoint};

const MIN_SAMPLE: usize = 4;
/// Twice the triangle area (square pixels) below which three points count as collinear.
const COLLINEAR_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub homography: Homography,
    /// One flag per input match.
    pub inliers: Vec<bool>,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&f| f).count()
    }
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn normalizer(pts: &[(f64, f64)]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (mx / n, my / n);
    let mean_dist = pts.iter().map(|p| (p.0 - mx).hypot(p.1 - my)).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

fn apply(t: &Matrix3<f64>, p: (f64, f64)) -> (f64, f64) {
    (t[(0, 0)] * p.0 + t[(0, 2)], t[(1, 1)] * p.1 + t[(1, 2)])
}

fn has_collinear_triple(pts: &[(f64, f64)]) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (pts[i], pts[j], pts[k]);
                let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
                if cross.abs() < COLLINEAR_EPS {
                    return true;
                }
            }
        }
    }
    false
}

/// Normalized direct linear transform fit of `b ~ H a` over at least four correspondences.
pub fn fit_homography_dlt(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<Homography> {
    if a.len() != b.len() {
        return Err(invalid!("{} source points but {} targets", a.len(), b.len()));
    }
    if a.len() < MIN_SAMPLE {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLE,
            got: a.len(),
        });
    }
    let (ta, tb) = (normalizer(a), normalizer(b));
    // At least 9 rows so the SVD yields the full right singular basis.
    let rows = (2 * a.len()).max(9);
    let mut m = DMatrix::<f64>::zeros(rows, 9);
    for (i, (&pa, &pb)) in a.iter().zip(b).enumerate() {
        let (x, y) = apply(&ta, pa);
        let (u, v) = apply(&tb, pb);
        let r = 2 * i;
        for (c, val) in [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u].into_iter().enumerate() {
            m[(r, c)] = val;
        }
        for (c, val) in [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v].into_iter().enumerate() {
            m[(r + 1, c)] = val;
        }
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| invalid!("SVD did not converge"))?;
    let smallest = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &s)| if s < best.1 { (i, s) } else { best })
        .0;
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let tb_inv = tb.try_inverse().ok_or(Error::SingularMatrix(0.0))?;
    let full = tb_inv * hn * ta;
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[r * 3 + c] = full[(r, c)];
        }
    }
    let scale = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale > 0.0 {
        for v in &mut out {
            *v /= scale;
        }
    }
    Homography::new(out)
}

fn point(k: &Keypoint) -> (f64, f64) {
    (f64::from(k.x), f64::from(k.y))
}

fn inlier_flags(h: &Homography, pa: &[(f64, f64)], pb: &[(f64, f64)], eps: f64) -> Vec<bool> {
    pa.iter()
        .zip(pb)
        .map(|(&a, &b)| h.project(a.0, a.1).is_ok_and(|(x, y)| (x - b.0).hypot(y - b.1) < eps))
        .collect()
}

/// Seeded four-point RANSAC followed by a least-squares refit on the best consensus set.
///
/// Degenerate samples (collinear triples, singular fits) use up an iteration.
pub fn ransac_homography(
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    matches: &[MatchPair],
    iters: usize,
    inlier_eps: f64,
    seed: u64,
) -> Result<RansacResult> {
    if matches.len() < MIN_SAMPLE {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLE,
            got: matches.len(),
        });
    }
    if iters == 0 || !(inlier_eps > 0.0) {
        return Err(invalid!("need iters >= 1 and inlier_eps > 0, got {iters} and {inlier_eps}"));
    }
    let mut pa = Vec::with_capacity(matches.len());
    let mut pb = Vec::with_capacity(matches.len());
    for m in matches {
        match (kps_a.get(m.index_a), kps_b.get(m.index_b)) {
            (Some(a), Some(b)) => {
                pa.push(point(a));
                pb.push(point(b));
            }
            _ => return Err(invalid!("match ({}, {}) references a missing keypoint", m.index_a, m.index_b)),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Homography, Vec<bool>)> = None;
    for _ in 0..iters {
        let idx = sample(&mut rng, matches.len(), MIN_SAMPLE).into_vec();
        let sa: Vec<_> = idx.iter().map(|&i| pa[i]).collect();
        let sb: Vec<_> = idx.iter().map(|&i| pb[i]).collect();
        if has_collinear_triple(&sa) || has_collinear_triple(&sb) {
            continue;
        }
        let Ok(h) = fit_homography_dlt(&sa, &sb) else {
            continue;
        };
        let flags = inlier_flags(&h, &pa, &pb, inlier_eps);
        let count = flags.iter().filter(|&&f| f).count();
        if best.as_ref().map_or(true, |(c, _, _)| count > *c) {
            best = Some((count, h, flags));
        }
    }
    let (count, h, flags) = best.ok_or(Error::InsufficientData {
        needed: MIN_SAMPLE,
        got: 0,
    })?;
    if count < MIN_SAMPLE {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLE,
            got: count,
        });
    }
    let (ia, ib): (Vec<_>, Vec<_>) = flags
        .iter()
        .zip(pa.iter().zip(&pb))
        .filter(|(&f, _)| f)
        .map(|(_, (&a, &b))| (a, b))
        .unzip();
    if let Ok(refit) = fit_homography_dlt(&ia, &ib) {
        let refit_flags = inlier_flags(&refit, &pa, &pb, inlier_eps);
        if refit_flags.iter().filter(|&&f| f).count() >= count {
            return Ok(RansacResult {
                homography: refit,
                inliers: refit_flags,
            });
        }
    }
    Ok(RansacResult {
        homography: h,
        inliers: flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dlt_exact_four_points() {
        let h = Homography::new([1.1, 0.05, 3.0, -0.02, 0.95, -2.0, 1e-4, 2e-4, 1.0]).unwrap();
        let a = [(0.0, 0.0), (100.0, 5.0), (90.0, 80.0), (10.0, 70.0)];
        let b: Vec<_> = a.iter().map(|&(x, y)| h.project(x, y).unwrap()).collect();
        let fit = fit_homography_dlt(&a, &b).unwrap();
        for (x, y) in [(50.0, 50.0), (3.0, 97.0)] {
            let (p, q) = (fit.project(x, y).unwrap(), h.project(x, y).unwrap());
            assert!((p.0 - q.0).hypot(p.1 - q.1) < 1e-6);
        }
    }

    #[test]
    fn too_few_matches() {
        let kps: Vec<Keypoint> = (0..3).map(|i| Keypoint::new(i as f32, 0.0)).collect();
        let m: Vec<MatchPair> = (0..3)
            .map(|i| MatchPair { index_a: i, index_b: i, distance: 0.0, ratio: 0.0 })
            .collect();
        assert!(matches!(
            ransac_homography(&kps, &kps, &m, 10, 1.0, 0),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn collinear_only_fails() {
        let kps: Vec<Keypoint> = (0..6).map(|i| Keypoint::new(i as f32, 2.0 * i as f32)).collect();
        let m: Vec<MatchPair> = (0..6)
            .map(|i| MatchPair { index_a: i, index_b: i, distance: 0.0, ratio: 0.0 })
            .collect();
        assert!(ransac_homography(&kps, &kps, &m, 20, 1.0, 0).is_err());
    }
}
