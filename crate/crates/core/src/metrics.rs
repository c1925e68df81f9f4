//! Keypoint density, repeatability, foreground ratio and match correctness, per image pair
//! and aggregated over a sequence.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{OxfordSequence, SEQUENCE_LEN};
use crate::descmatch::{brief_describe, count_correct, nndr_match, sift_describe, Descriptor, DEFAULT_RATIO};
use crate::detectors::{DetectorProfile, KeypointDetector};
use crate::error::{invalid, Error, Result};
use crate::espnet::{infer_mask, mask_to_keypoints, ModelWeights};
use crate::imgcore::{load_image, rgb_to_gray, BinaryMask, GrayImage, Homography, Keypoint, KeypointList, RgbImage};

pub const DEFAULT_EPS: f64 = 1.0;

/// Keypoints per pixel.
pub fn keypoint_density(n: usize, width: usize, height: usize) -> Result<f64> {
    let area = width * height;
    if area == 0 {
        return Err(invalid!("zero image area ({width}x{height})"));
    }
    Ok(n as f64 / area as f64)
}

/// How keypoints of `A` inside the common region are counted as repeated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepeatabilityMode {
    /// A keypoint counts when some `B` keypoint in the region lies within `eps` of its projection.
    #[default]
    Correspondence,
    /// Every `A` keypoint inside the region counts.
    Presence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepeatabilityCounts {
    /// Keypoints of `A` whose projection lands inside `B`.
    pub n_a: usize,
    /// Keypoints of `B` whose back-projection lands inside `A`.
    pub n_b: usize,
    pub n_common: usize,
}

impl RepeatabilityCounts {
    /// `n_common / min(n_a, n_b)`, capped at 1, and 0 when either side is empty.
    pub fn ratio(&self) -> f64 {
        let denom = self.n_a.min(self.n_b);
        if denom == 0 {
            return 0.0;
        }
        (self.n_common as f64 / denom as f64).min(1.0)
    }
}

fn inside(p: (f64, f64), (w, h): (usize, usize)) -> bool {
    p.0 >= 0.0 && p.1 >= 0.0 && p.0 < w as f64 && p.1 < h as f64
}

fn xy(k: &Keypoint) -> (f64, f64) {
    (f64::from(k.x), f64::from(k.y))
}

pub fn repeatability_counts(
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h_ab: &Homography,
    dims_a: (usize, usize),
    dims_b: (usize, usize),
    eps: f64,
    mode: RepeatabilityMode,
) -> Result<RepeatabilityCounts> {
    if !(eps > 0.0) {
        return Err(invalid!("eps must be positive, got {eps}"));
    }
    let h_ba = h_ab.inverse()?;
    // Projected A keypoints that fall inside B; points sent to infinity are outside.
    let a_in: Vec<(f64, f64)> = kps_a
        .iter()
        .filter_map(|k| h_ab.project(k.x.into(), k.y.into()).ok())
        .filter(|&p| inside(p, dims_b))
        .collect();
    let b_in: Vec<(f64, f64)> = kps_b
        .iter()
        .filter(|k| h_ba.project(k.x.into(), k.y.into()).is_ok_and(|p| inside(p, dims_a)))
        .map(xy)
        .collect();
    let n_common = match mode {
        RepeatabilityMode::Presence => a_in.len(),
        RepeatabilityMode::Correspondence => {
            let grid = PointGrid::new(&b_in, eps);
            a_in.iter().filter(|&&p| grid.any_within(p, eps)).count()
        }
    };
    Ok(RepeatabilityCounts {
        n_a: a_in.len(),
        n_b: b_in.len(),
        n_common,
    })
}

/// Buckets points into square cells of side `cell` so radius queries touch a 3x3 neighbourhood.
struct PointGrid<'a> {
    pts: &'a [(f64, f64)],
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> PointGrid<'a> {
    fn new(pts: &'a [(f64, f64)], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, &p) in pts.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { pts, cell, buckets }
    }

    fn key(p: (f64, f64), cell: f64) -> (i64, i64) {
        ((p.0 / cell).floor() as i64, (p.1 / cell).floor() as i64)
    }

    fn any_within(&self, p: (f64, f64), r: f64) -> bool {
        let (kx, ky) = Self::key(p, self.cell);
        (-1..=1).any(|dy| {
            (-1..=1).any(|dx| {
                self.buckets.get(&(kx + dx, ky + dy)).is_some_and(|ids| {
                    ids.iter().any(|&i| (p.0 - self.pts[i].0).hypot(p.1 - self.pts[i].1) <= r)
                })
            })
        })
    }
}

/// Fraction of keypoints re-found across a pair within the common region.
pub fn repeatability(
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h_ab: &Homography,
    dims_a: (usize, usize),
    dims_b: (usize, usize),
    eps: f64,
) -> Result<f64> {
    repeatability_counts(kps_a, kps_b, h_ab, dims_a, dims_b, eps, RepeatabilityMode::Correspondence)
        .map(|c| c.ratio())
}

/// Fraction of keypoints whose rounded pixel is foreground.
pub fn fkp_ratio(kps: &[Keypoint], fg: &BinaryMask) -> Result<f64> {
    if kps.is_empty() {
        return Err(Error::UndefinedRatio("no keypoints".into()));
    }
    let mut on = 0usize;
    for k in kps {
        let (x, y) = (k.x.round(), k.y.round());
        if x < 0.0 || y < 0.0 || x as usize >= fg.width() || y as usize >= fg.height() {
            return Err(invalid!(
                "keypoint ({}, {}) outside the {}x{} mask",
                k.x,
                k.y,
                fg.width(),
                fg.height()
            ));
        }
        on += usize::from(fg.get(x as usize, y as usize));
    }
    Ok(on as f64 / kps.len() as f64)
}

/// Which keypoints to evaluate.
#[derive(Debug, Clone)]
pub enum DetectorSpec {
    Classical {
        detector: KeypointDetector,
        profile: DetectorProfile,
    },
    Deep {
        weights: Arc<ModelWeights>,
        tau: f64,
    },
}

impl DetectorSpec {
    pub fn name(&self) -> String {
        match self {
            DetectorSpec::Classical { detector, profile } => format!("{detector}/{}", profile.name),
            DetectorSpec::Deep { tau, .. } => format!("deep/tau={tau}"),
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match self {
            DetectorSpec::Deep { tau, .. } => Some(*tau),
            DetectorSpec::Classical { .. } => None,
        }
    }

    pub fn detect(&self, img: &RgbImage, gray: &GrayImage) -> Result<KeypointList> {
        match self {
            DetectorSpec::Classical { detector, profile } => detector.detect(gray, profile),
            DetectorSpec::Deep { weights, tau } => {
                let (prob, mask) = infer_mask(img, weights, *tau)?;
                Ok(mask_to_keypoints(&mask, Some(&prob)))
            }
        }
    }

    /// SIFT for everything except ORB and BRISK, which use the binary descriptor.
    pub fn default_descriptor(&self, oriented: bool, seed: u64) -> DescriptorSpec {
        match self {
            DetectorSpec::Classical {
                detector: KeypointDetector::Orb | KeypointDetector::Brisk,
                ..
            } => DescriptorSpec::Brief { seed },
            _ => DescriptorSpec::Sift { oriented },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DescriptorSpec {
    Sift { oriented: bool },
    Brief { seed: u64 },
}

impl DescriptorSpec {
    pub fn describe(&self, gray: &GrayImage, kps: &[Keypoint]) -> Result<Vec<Descriptor>> {
        match *self {
            DescriptorSpec::Sift { oriented } => sift_describe(gray, kps, oriented),
            DescriptorSpec::Brief { seed } => brief_describe(gray, kps, seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub eps: f64,
    pub ratio: f64,
    pub repeatability_mode: RepeatabilityMode,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            ratio: DEFAULT_RATIO,
            repeatability_mode: RepeatabilityMode::Correspondence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    /// `"1-n"` style label.
    pub pair: String,
    pub n_a: usize,
    pub n_b: usize,
    pub density_a: f64,
    pub density_b: f64,
    pub repeatability: f64,
    pub n_matches: usize,
    pub n_correct: usize,
}

fn stage<T>(pair: &str, stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::PairFailed {
        pair: pair.to_string(),
        stage,
        source: Box::new(e),
    })
}

/// Detects, describes, matches and scores one image pair against its ground-truth homography.
pub fn evaluate_pair(
    pair: &str,
    img_a: &RgbImage,
    img_b: &RgbImage,
    h_gt: &Homography,
    detector: &DetectorSpec,
    descriptor: &DescriptorSpec,
    settings: &EvalSettings,
) -> Result<PairRecord> {
    let (gray_a, gray_b) = (rgb_to_gray(img_a), rgb_to_gray(img_b));
    let kps_a = stage(pair, "detect", detector.detect(img_a, &gray_a))?;
    let kps_b = stage(pair, "detect", detector.detect(img_b, &gray_b))?;
    let desc_a = stage(pair, "describe", descriptor.describe(&gray_a, &kps_a))?;
    let desc_b = stage(pair, "describe", descriptor.describe(&gray_b, &kps_b))?;
    let matches = stage(pair, "match", nndr_match(&desc_a, &desc_b, settings.ratio))?;
    let n_correct = stage(pair, "verify", count_correct(&matches, &kps_a, &kps_b, h_gt, settings.eps))?;
    let dims_a = (img_a.width(), img_a.height());
    let dims_b = (img_b.width(), img_b.height());
    let rep = stage(
        pair,
        "repeatability",
        repeatability_counts(&kps_a, &kps_b, h_gt, dims_a, dims_b, settings.eps, settings.repeatability_mode),
    )?;
    Ok(PairRecord {
        pair: pair.to_string(),
        n_a: kps_a.len(),
        n_b: kps_b.len(),
        density_a: stage(pair, "density", keypoint_density(kps_a.len(), dims_a.0, dims_a.1))?,
        density_b: stage(pair, "density", keypoint_density(kps_b.len(), dims_b.0, dims_b.1))?,
        repeatability: rep.ratio(),
        n_matches: matches.len(),
        n_correct,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    /// Mean over records of the two images' densities.
    pub avg_density: f64,
    pub avg_repeatability: f64,
    pub total_correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingsSnapshot {
    pub eps: f64,
    pub tau: Option<f64>,
    pub ratio: f64,
    pub repeatability_mode: RepeatabilityMode,
    pub detector: String,
    pub descriptor: DescriptorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub sequence: String,
    pub records: Vec<PairRecord>,
    pub aggregates: Aggregates,
    pub settings: SettingsSnapshot,
}

pub fn aggregate(records: &[PairRecord]) -> Aggregates {
    let n = records.len().max(1) as f64;
    Aggregates {
        avg_density: records.iter().map(|r| 0.5 * (r.density_a + r.density_b)).sum::<f64>() / n,
        avg_repeatability: records.iter().map(|r| r.repeatability).sum::<f64>() / n,
        total_correct: records.iter().map(|r| r.n_correct).sum(),
    }
}

/// Scores pairs `(1, n)` for `n = 2..=6`; records come back in pair order.
pub fn evaluate_sequence(
    seq: &OxfordSequence,
    detector: &DetectorSpec,
    descriptor: &DescriptorSpec,
    settings: &EvalSettings,
) -> Result<MetricsReport> {
    if seq.images.len() != SEQUENCE_LEN {
        return Err(invalid!("sequence {} has {} images, expected {SEQUENCE_LEN}", seq.name, seq.images.len()));
    }
    let images: Vec<RgbImage> = seq.images.par_iter().map(load_image).collect::<Result<_>>()?;
    let records: Vec<PairRecord> = (2..=SEQUENCE_LEN)
        .into_par_iter()
        .map(|n| {
            let h = seq.homography(n)?;
            evaluate_pair(&format!("1-{n}"), &images[0], &images[n - 1], h, detector, descriptor, settings)
        })
        .collect::<Result<_>>()?;
    Ok(MetricsReport {
        sequence: seq.name.clone(),
        aggregates: aggregate(&records),
        records,
        settings: SettingsSnapshot {
            eps: settings.eps,
            tau: detector.tau(),
            ratio: settings.ratio,
            repeatability_mode: settings.repeatability_mode,
            detector: detector.name(),
            descriptor: *descriptor,
        },
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("metrics report: {e}")))
    }

    /// `pair,n_a,n_b,repeatability,n_correct,density_a,density_b`, one row per record.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("pair,n_a,n_b,repeatability,n_correct,density_a,density_b\n");
        for r in &self.records {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.pair, r.n_a, r.n_b, r.repeatability, r.n_correct, r.density_a, r.density_b
            )
            .expect("write to string");
        }
        s
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (ext, body) in [("json", self.to_json()), ("csv", self.to_csv())] {
            let p = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
