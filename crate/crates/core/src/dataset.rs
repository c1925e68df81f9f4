//! Oxford-style image sequences with plain-text homographies, and seeded corpus splits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::fusion::{LabeledSample, IMAGE_EXTENSIONS};
use crate::imgcore::Homography;

/// Images per sequence; pairs are `(1, n)` for `n` in `2..=SEQUENCE_LEN`.
pub const SEQUENCE_LEN: usize = 6;

/// Parses nine whitespace-separated numbers, row-major.
pub fn parse_homography(text: &str, origin: &Path) -> Result<Homography> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != 9 {
        return Err(Error::TokenCount {
            path: origin.to_path_buf(),
            found: tokens.len(),
        });
    }
    let mut m = [0.0; 9];
    for (slot, tok) in m.iter_mut().zip(&tokens) {
        *slot = tok
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::NonNumericToken {
                path: origin.to_path_buf(),
                token: (*tok).to_string(),
            })?;
    }
    Homography::new(m)
}

pub fn parse_homography_file(path: impl AsRef<Path>) -> Result<Homography> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_homography(&text, path)
}

/// Three lines of three values, each with 12 significant digits.
pub fn format_homography(h: &Homography) -> String {
    h.matrix()
        .chunks(3)
        .map(|row| row.iter().map(|v| format!("{v:.11e}")).collect::<Vec<_>>().join(" ") + "\n")
        .collect()
}

pub fn write_homography_file(h: &Homography, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_homography(h)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OxfordSequence {
    pub name: String,
    /// `img1` through `img6`, in order.
    pub images: Vec<PathBuf>,
    /// Homography from image 1 to image `n`, keyed by `n`.
    pub homographies: BTreeMap<usize, Homography>,
}

impl OxfordSequence {
    pub fn homography(&self, n: usize) -> Result<&Homography> {
        self.homographies
            .get(&n)
            .ok_or_else(|| invalid!("sequence {} has no homography 1->{n}", self.name))
    }
}

fn find_image(dir: &Path, stem: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS.iter().map(|ext| dir.join(format!("{stem}.{ext}"))).find(|p| p.is_file())
}

/// Loads `img1..img6` (ppm, pgm or png) and `H1to2p..H1to6p` from `dir`.
///
/// All missing files are reported together. Homographies are parsed and checked for
/// invertibility before anything is returned.
pub fn load_sequence(dir: impl AsRef<Path>) -> Result<OxfordSequence> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut missing = Vec::new();
    let mut images = Vec::with_capacity(SEQUENCE_LEN);
    for i in 1..=SEQUENCE_LEN {
        let stem = format!("img{i}");
        match find_image(dir, &stem) {
            Some(p) => images.push(p),
            None => missing.push(format!("{stem}.{{{}}}", IMAGE_EXTENSIONS.join(","))),
        }
    }
    let h_paths: Vec<(usize, PathBuf)> = (2..=SEQUENCE_LEN).map(|n| (n, dir.join(format!("H1to{n}p")))).collect();
    for (n, p) in &h_paths {
        if !p.is_file() {
            missing.push(format!("H1to{n}p"));
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteSequence {
            dir: dir.to_path_buf(),
            missing,
        });
    }
    let mut homographies = BTreeMap::new();
    for (n, p) in h_paths {
        let h = parse_homography_file(&p)?;
        h.inverse()?;
        homographies.insert(n, h);
    }
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(OxfordSequence {
        name,
        images,
        homographies,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
    pub seed: u64,
}

/// Seeded shuffle, then the first `floor(fraction * N)` samples go to training.
///
/// The cut is clamped to `[1, N - 1]` so neither side is empty.
pub fn split_corpus(samples: &[LabeledSample], train_fraction: f64, seed: u64) -> Result<CorpusSplit> {
    if samples.len() < 2 {
        return Err(invalid!("need at least 2 samples to split, got {}", samples.len()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid!("train fraction must lie in (0, 1), got {train_fraction}"));
    }
    let n = samples.len();
    // The small offset keeps fractions like 33/41 from rounding below their exact product.
    let cut = ((train_fraction * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect();
    Ok(CorpusSplit {
        train: pick(&order[..cut]),
        val: pick(&order[cut..]),
        seed,
    })
}
