//! Multi-scale FAST detection stages of ORB and BRISK.

use super::fast::{fast_candidates, segment_score};
use super::harris::harris_response;
use super::nms::{suppress, Candidate};
use super::profile::DetectorProfile;
use crate::error::{invalid, Result};
use crate::imgcore::{resize_bilinear, GrayImage, Keypoint, KeypointList, DEFAULT_SCALE};

const MIN_LEVEL_SIZE: usize = 7;

/// One resampled layer with the factors mapping it back to base resolution.
#[derive(Debug, Clone)]
pub struct ScaleLayer {
    pub image: GrayImage,
    /// Nominal scale of the layer (1 at base resolution).
    pub scale: f32,
    pub fx: f32,
    pub fy: f32,
}

impl ScaleLayer {
    fn new(base: &GrayImage, scale: f32) -> Option<Self> {
        let w = (base.width() as f32 / scale).round() as usize;
        let h = (base.height() as f32 / scale).round() as usize;
        if w < MIN_LEVEL_SIZE || h < MIN_LEVEL_SIZE {
            return None;
        }
        let image = if w == base.width() && h == base.height() {
            base.clone()
        } else {
            resize_bilinear(base, w, h)
        };
        Some(Self {
            fx: base.width() as f32 / w as f32,
            fy: base.height() as f32 / h as f32,
            image,
            scale,
        })
    }

    fn to_base(&self, x: usize, y: usize, base_w: usize, base_h: usize) -> (f32, f32) {
        let bx = (x as f32 * self.fx).min(base_w as f32 - 1.0);
        let by = (y as f32 * self.fy).min(base_h as f32 - 1.0);
        (bx, by)
    }
}

fn check_size(img: &GrayImage) -> Result<()> {
    if img.width() < MIN_LEVEL_SIZE || img.height() < MIN_LEVEL_SIZE {
        return Err(invalid!(
            "segment test needs at least 7x7 pixels, got {}x{}",
            img.width(),
            img.height()
        ));
    }
    Ok(())
}

/// FAST-9 on an `orb_levels`-level pyramid (factor `orb_scale`), scored and ranked by
/// Harris response. Keypoints come back in descending score order.
pub fn detect_orb(img: &GrayImage, profile: &DetectorProfile) -> Result<KeypointList> {
    check_size(img)?;
    let mut out = Vec::new();
    for level in 0..profile.orb_levels {
        let scale = profile.orb_scale.powi(level as i32);
        let Some(layer) = ScaleLayer::new(img, scale) else {
            break;
        };
        let (w, h) = (layer.image.width(), layer.image.height());
        let cands = fast_candidates(&layer.image, profile.fast_t)?;
        let kept = suppress(w, h, &cands, profile.nms_radius as usize);
        if kept.is_empty() {
            continue;
        }
        let response = harris_response(&layer.image, profile.harris_k)?;
        for c in kept {
            let (x, y) = layer.to_base(c.x, c.y, img.width(), img.height());
            out.push(Keypoint {
                x,
                y,
                score: response[c.y * w + c.x],
                scale: DEFAULT_SCALE * scale,
            });
        }
    }
    // Stable sort keeps level/raster order among equal responses.
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}

/// BRISK scale-space: octaves `c_i` (scale 2^i) interleaved with intra-octaves
/// `d_i` (scale 1.5 * 2^i), in increasing scale order.
pub fn brisk_layers(img: &GrayImage, octaves: u32) -> Vec<ScaleLayer> {
    let mut layers = Vec::new();
    for i in 0..octaves {
        let c = 2f32.powi(i as i32);
        for scale in [c, 1.5 * c] {
            match ScaleLayer::new(img, scale) {
                Some(l) => layers.push(l),
                None => return layers,
            }
        }
    }
    layers
}

/// Segment-test score map of every layer (0 where not a corner).
pub fn brisk_score_maps(layers: &[ScaleLayer], t: u32) -> Vec<Vec<f32>> {
    layers
        .iter()
        .map(|l| {
            let (w, h) = (l.image.width(), l.image.height());
            let mut map = vec![0f32; w * h];
            for y in 0..h {
                for x in 0..w {
                    map[y * w + x] = segment_score(&l.image, x, y, t);
                }
            }
            map
        })
        .collect()
}

/// Maximum score in the 3x3 patch of layer `to` around the location that `(x, y)` of
/// layer `from` maps to.
pub fn neighbor_patch_max(layers: &[ScaleLayer], maps: &[Vec<f32>], from: usize, to: usize, x: usize, y: usize) -> f32 {
    let src = &layers[from];
    let dst = &layers[to];
    let (w, h) = (dst.image.width(), dst.image.height());
    let cx = ((x as f32 + 0.5) * src.fx / dst.fx - 0.5).round().clamp(0.0, (w - 1) as f32) as usize;
    let cy = ((y as f32 + 0.5) * src.fy / dst.fy - 0.5).round().clamp(0.0, (h - 1) as f32) as usize;
    let mut best = 0f32;
    for yy in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
        for xx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
            best = best.max(maps[to][yy * w + xx]);
        }
    }
    best
}

/// BRISK detections with the index of the layer each came from.
pub fn detect_brisk_layered(img: &GrayImage, profile: &DetectorProfile) -> Result<Vec<(Keypoint, usize)>> {
    check_size(img)?;
    let layers = brisk_layers(img, profile.brisk_octaves);
    let maps = brisk_score_maps(&layers, profile.fast_t);
    let mut out = Vec::new();
    for (li, layer) in layers.iter().enumerate() {
        let (w, h) = (layer.image.width(), layer.image.height());
        let cands: Vec<Candidate> = maps[li]
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0.0)
            .map(|(i, &s)| Candidate {
                x: i % w,
                y: i / w,
                score: s,
            })
            .collect();
        for c in suppress(w, h, &cands, profile.nms_radius as usize) {
            let below = li.checked_sub(1);
            let above = (li + 1 < layers.len()).then_some(li + 1);
            let dominated = [below, above]
                .into_iter()
                .flatten()
                .any(|n| neighbor_patch_max(&layers, &maps, li, n, c.x, c.y) > c.score);
            if dominated {
                continue;
            }
            let (x, y) = layer.to_base(c.x, c.y, img.width(), img.height());
            out.push((
                Keypoint {
                    x,
                    y,
                    score: c.score,
                    scale: DEFAULT_SCALE * layer.scale,
                },
                li,
            ));
        }
    }
    Ok(out)
}

pub fn detect_brisk(img: &GrayImage, profile: &DetectorProfile) -> Result<KeypointList> {
    Ok(detect_brisk_layered(img, profile)?.into_iter().map(|(k, _)| k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corner() -> GrayImage {
        GrayImage::from_fn(64, 64, |x, y| if x >= 32 && y >= 32 { 220.0 } else { 20.0 })
    }

    #[test]
    fn constant_is_empty() {
        let img = GrayImage::filled(64, 64, 50.0);
        assert!(detect_orb(&img, &DetectorProfile::low()).unwrap().is_empty());
        assert!(detect_brisk(&img, &DetectorProfile::low()).unwrap().is_empty());
    }

    #[test]
    fn orb_finds_apex_on_level_zero() {
        let kps = detect_orb(&corner(), &DetectorProfile::normal()).unwrap();
        assert!(kps
            .iter()
            .any(|k| k.scale == DEFAULT_SCALE && (k.x - 32.0).abs() <= 2.0 && (k.y - 32.0).abs() <= 2.0));
        for k in &kps {
            assert!(k.in_bounds(64, 64));
        }
        assert!(kps.windows(2).all(|p| p[0].score >= p[1].score));
    }

    #[test]
    fn brisk_finds_apex_and_is_scale_maximal() {
        let img = corner();
        let p = DetectorProfile::normal();
        let found = detect_brisk_layered(&img, &p).unwrap();
        assert!(found
            .iter()
            .any(|(k, _)| (k.x - 32.0).abs() <= 2.0 && (k.y - 32.0).abs() <= 2.0));
        let layers = brisk_layers(&img, p.brisk_octaves);
        let maps = brisk_score_maps(&layers, p.fast_t);
        for (k, li) in &found {
            let l = &layers[*li];
            let x = (k.x / l.fx).round() as usize;
            let y = (k.y / l.fy).round() as usize;
            for n in [li.checked_sub(1), Some(li + 1)].into_iter().flatten() {
                if n < layers.len() {
                    assert!(k.score >= neighbor_patch_max(&layers, &maps, *li, n, x, y));
                }
            }
        }
    }
}
