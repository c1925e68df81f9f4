//! Supervision labels: every detector's output rasterized to a binary mask and fused
//! with a per-pixel OR.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{DetectorProfile, EdgeDetector, KeypointDetector, ProfileName};
use crate::error::{invalid, Error, Result};
use crate::imgcore::{
    degrade_photometric, load_image, rgb_to_gray, sample_degradation, save_image, save_mask, GrayImage, Keypoint,
    RgbImage,
};

pub use crate::imgcore::BinaryMask;

/// Mean-luma and luma-deviation bounds below which a scene counts as low-visibility.
pub const LOW_VISIBILITY_MEAN: f64 = 60.0;
pub const LOW_VISIBILITY_STD: f64 = 20.0;

pub fn rasterize_keypoints(kps: &[Keypoint], width: usize, height: usize) -> Result<BinaryMask> {
    rasterize_keypoints_dilated(kps, width, height, 0)
}

/// Paints each keypoint's rounded pixel, optionally grown to a `(2r+1)^2` square.
pub fn rasterize_keypoints_dilated(kps: &[Keypoint], width: usize, height: usize, radius: usize) -> Result<BinaryMask> {
    let mut mask = BinaryMask::zeros(width, height);
    for (i, k) in kps.iter().enumerate() {
        let (cx, cy) = (k.x.round(), k.y.round());
        if !(cx >= 0.0 && cy >= 0.0 && (cx as usize) < width && (cy as usize) < height) {
            return Err(invalid!(
                "keypoint #{i} at ({}, {}) lies outside the {width}x{height} raster",
                k.x,
                k.y
            ));
        }
        let (cx, cy) = (cx as usize, cy as usize);
        for y in cy.saturating_sub(radius)..=(cy + radius).min(height - 1) {
            for x in cx.saturating_sub(radius)..=(cx + radius).min(width - 1) {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

pub fn fuse_masks(masks: &[BinaryMask]) -> Result<BinaryMask> {
    let first = masks.first().ok_or_else(|| invalid!("cannot fuse an empty mask list"))?;
    if let Some((i, m)) = masks.iter().enumerate().find(|(_, m)| !m.same_dims(first)) {
        return Err(invalid!(
            "mask #{i} is {}x{}, expected {}x{}",
            m.width(),
            m.height(),
            first.width(),
            first.height()
        ));
    }
    let mut data = first.data().to_vec();
    for m in &masks[1..] {
        for (d, &v) in data.iter_mut().zip(m.data()) {
            *d |= v;
        }
    }
    BinaryMask::new(first.width(), first.height(), data)
}

/// The nine constituent masks (seven keypoint detectors, then Canny and Sobel).
pub fn build_label_parts(img: &RgbImage, profile: &DetectorProfile) -> Result<Vec<(String, BinaryMask)>> {
    let gray = rgb_to_gray(img);
    label_parts_gray(&gray, profile)
}

fn label_parts_gray(gray: &GrayImage, profile: &DetectorProfile) -> Result<Vec<(String, BinaryMask)>> {
    let (w, h) = (gray.width(), gray.height());
    let mut parts = Vec::with_capacity(9);
    for det in KeypointDetector::ALL {
        let kps = det.detect(gray, profile)?;
        parts.push((det.name().to_string(), rasterize_keypoints(&kps, w, h)?));
    }
    for det in EdgeDetector::ALL {
        let name = match det {
            EdgeDetector::Canny => "canny",
            EdgeDetector::Sobel => "sobel",
        };
        parts.push((name.to_string(), det.detect(gray, profile)?));
    }
    Ok(parts)
}

/// Fused keypoint-and-edge label `M(I) = M_D(I) OR M_E(I)`.
pub fn build_label(img: &RgbImage, profile: &DetectorProfile) -> Result<BinaryMask> {
    let parts = build_label_parts(img, profile)?;
    let masks: Vec<BinaryMask> = parts.into_iter().map(|(_, m)| m).collect();
    fuse_masks(&masks)
}

/// Population mean and standard deviation of BT.601 luma.
pub fn luma_stats(img: &RgbImage) -> (f64, f64) {
    let gray = rgb_to_gray(img);
    let n = gray.data().len() as f64;
    let mean = gray.mean();
    let var = gray.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// An explicit flag wins; otherwise dark (`mean < 60`) or flat (`std < 20`) scenes get the Low profile.
pub fn select_profile(img: &RgbImage, low_visibility: Option<bool>) -> DetectorProfile {
    let low = low_visibility.unwrap_or_else(|| {
        let (mean, std) = luma_stats(img);
        mean < LOW_VISIBILITY_MEAN || std < LOW_VISIBILITY_STD
    });
    if low {
        DetectorProfile::low()
    } else {
        DetectorProfile::normal()
    }
}

/// One training pair on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub profile_used: ProfileName,
    pub degraded: bool,
}

/// One JSON-lines manifest record. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifestEntry {
    Sample {
        image: String,
        mask: String,
        profile: ProfileName,
        degraded: bool,
        seed: u64,
    },
    Skipped {
        skipped: String,
        reason: String,
    },
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut buf = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut buf, e).map_err(|e| Error::Parse(e.to_string()))?;
        buf.write_all(b"\n").expect("writing to a Vec");
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_manifest_entries(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Samples listed in a manifest, with paths resolved against its directory.
pub fn read_manifest(path: &Path) -> Result<Vec<LabeledSample>> {
    let root = path.parent().unwrap_or(Path::new("."));
    Ok(read_manifest_entries(path)?
        .into_iter()
        .filter_map(|e| match e {
            ManifestEntry::Sample {
                image,
                mask,
                profile,
                degraded,
                ..
            } => Some(LabeledSample {
                image_path: root.join(image),
                mask_path: root.join(mask),
                profile_used: profile,
                degraded,
            }),
            ManifestEntry::Skipped { .. } => None,
        })
        .collect())
}

pub const IMAGE_EXTENSIONS: [&str; 3] = ["ppm", "pgm", "png"];

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub samples: Vec<LabeledSample>,
    pub skipped: Vec<(PathBuf, String)>,
    pub manifest_path: PathBuf,
}

/// Builds image/label pairs for every readable image in `src_dir`.
///
/// `floor(fraction * N)` readable images (chosen by a seeded shuffle) are photometrically
/// degraded and labeled with the Low profile; the rest use [`select_profile`]. Writes
/// `images/`, `masks/` and `manifest.jsonl` under `out_dir`; manifest order follows the
/// sorted source paths.
pub fn generate_corpus(src_dir: &Path, out_dir: &Path, degrade_fraction: f64, seed: u64) -> Result<GeneratedCorpus> {
    if !(0.0..=1.0).contains(&degrade_fraction) {
        return Err(invalid!("degrade fraction must lie in [0, 1], got {degrade_fraction}"));
    }
    let sources = list_images(src_dir)?;
    let loaded: Vec<(PathBuf, Result<RgbImage>)> =
        sources.par_iter().map(|p| (p.clone(), load_image(p))).collect();

    let readable: Vec<usize> = loaded
        .iter()
        .enumerate()
        .filter(|(_, (_, r))| r.is_ok())
        .map(|(i, _)| i)
        .collect();
    if readable.is_empty() {
        return Err(invalid!("no readable images in {}", src_dir.display()));
    }
    let n_degrade = ((degrade_fraction * readable.len() as f64) + 1e-9).floor() as usize;
    let mut order = readable.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut degrade = vec![false; loaded.len()];
    for &i in order.iter().take(n_degrade) {
        degrade[i] = true;
    }

    let images_dir = out_dir.join("images");
    let masks_dir = out_dir.join("masks");
    for d in [&images_dir, &masks_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let results: Vec<Result<ManifestEntry>> = loaded
        .par_iter()
        .enumerate()
        .map(|(i, (src, img))| {
            let img = match img {
                Ok(img) => img,
                Err(e) => {
                    log::warn!("skipping unreadable image {}: {e}", src.display());
                    return Ok(ManifestEntry::Skipped {
                        skipped: src.display().to_string(),
                        reason: e.to_string(),
                    });
                }
            };
            let stem = src.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
            let stem = format!("{i:05}_{stem}");
            let (image, profile) = if degrade[i] {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1)));
                let (alpha, beta) = sample_degradation(&mut rng);
                (degrade_photometric(img, alpha, beta)?, DetectorProfile::low())
            } else {
                (img.clone(), select_profile(img, None))
            };
            let label = build_label(&image, &profile)?;
            let image_rel = format!("images/{stem}.ppm");
            let mask_rel = format!("masks/{stem}.pgm");
            save_image(&image, out_dir.join(&image_rel))?;
            save_mask(&label, out_dir.join(&mask_rel))?;
            Ok(ManifestEntry::Sample {
                image: image_rel,
                mask: mask_rel,
                profile: profile.name,
                degraded: degrade[i],
                seed,
            })
        })
        .collect();
    let entries = results.into_iter().collect::<Result<Vec<_>>>()?;

    let manifest_path = out_dir.join(MANIFEST_NAME);
    write_manifest(&manifest_path, &entries)?;
    let skipped = entries
        .iter()
        .filter_map(|e| match e {
            ManifestEntry::Skipped { skipped, reason } => Some((PathBuf::from(skipped), reason.clone())),
            _ => None,
        })
        .collect();
    Ok(GeneratedCorpus {
        samples: read_manifest(&manifest_path)?,
        skipped,
        manifest_path,
    })
}
