use super::model::{espnet_forward, images_to_tensor, validate_weights, Mode, STRIDE};
use super::ops::sigmoid;
use super::weights::ModelWeights;
use crate::error::{invalid, Result};
use crate::imgcore::{reflect101, resize_bilinear, resize_rgb_bilinear, BinaryMask, GrayImage, Keypoint, KeypointList, RgbImage};

/// Per-pixel keypoint probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ProbMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(invalid!("{width}x{height} probability map needs {} values, got {}", width * height, data.len()));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid!("probability {v} outside [0, 1]"));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, p: f32) -> Result<Self> {
        Self::new(width, height, vec![p; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Mask of pixels with probability at least `tau`.
    pub fn threshold(&self, tau: f64) -> Result<BinaryMask> {
        check_tau(tau)?;
        BinaryMask::new(
            self.width,
            self.height,
            self.data.iter().map(|&p| u8::from(f64::from(p) >= tau)).collect(),
        )
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid!("threshold tau must lie in (0, 1), got {tau}"));
    }
    Ok(())
}

fn round_up(n: usize) -> usize {
    n.div_ceil(STRIDE) * STRIDE
}

fn reflect_pad(img: &RgbImage, width: usize, height: usize) -> RgbImage {
    if (width, height) == (img.width(), img.height()) {
        return img.clone();
    }
    RgbImage::from_fn(width, height, |x, y| {
        img.pixel(reflect101(x as isize, img.width()), reflect101(y as isize, img.height()))
    })
}

/// Probability map at the image's own resolution.
///
/// With `working_size`, the network runs on a `working_size` square resize and the result is
/// resized back; otherwise the image is reflect-padded to a multiple of 8 and cropped afterwards.
pub fn predict_prob(img: &RgbImage, weights: &ModelWeights, working_size: Option<usize>) -> Result<ProbMap> {
    validate_weights(weights)?;
    let (w, h) = (img.width(), img.height());
    let input = match working_size {
        Some(s) if s == 0 || s % STRIDE != 0 => {
            return Err(invalid!("working size {s} must be a positive multiple of {STRIDE}"));
        }
        Some(s) => resize_rgb_bilinear(img, s, s),
        None => reflect_pad(img, round_up(w), round_up(h)),
    };
    let (iw, ih) = (input.width(), input.height());
    let x = images_to_tensor::<f32>(&[&input])?;
    let (logits, _) = espnet_forward(&x, weights, Mode::Eval)?;
    let probs: Vec<f32> = logits.data().iter().map(|&z| sigmoid(f64::from(z)) as f32).collect();
    let data = if working_size.is_some() {
        let plane = GrayImage::new(iw, ih, probs)?;
        resize_bilinear(&plane, w, h)
            .into_data()
            .into_iter()
            .map(|p| p.clamp(0.0, 1.0))
            .collect()
    } else {
        (0..h).flat_map(|y| probs[y * iw..y * iw + w].to_vec()).collect()
    };
    ProbMap::new(w, h, data)
}

/// Probability map and its `P >= tau` mask.
pub fn infer_mask(img: &RgbImage, weights: &ModelWeights, tau: f64) -> Result<(ProbMap, BinaryMask)> {
    infer_mask_at(img, weights, tau, None)
}

pub fn infer_mask_at(
    img: &RgbImage,
    weights: &ModelWeights,
    tau: f64,
    working_size: Option<usize>,
) -> Result<(ProbMap, BinaryMask)> {
    check_tau(tau)?;
    let prob = predict_prob(img, weights, working_size)?;
    let mask = prob.threshold(tau)?;
    Ok((prob, mask))
}

/// One keypoint per set pixel in raster order; scores come from `prob` when given.
pub fn mask_to_keypoints(mask: &BinaryMask, prob: Option<&ProbMap>) -> KeypointList {
    let mut out = Vec::with_capacity(mask.count());
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                let score = prob.map_or(1.0, |p| p.get(x, y));
                out.push(Keypoint::with_score(x as f32, y as f32, score));
            }
        }
    }
    out
}
