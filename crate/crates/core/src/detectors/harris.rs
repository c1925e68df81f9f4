use super::nms::{suppress, Candidate};
use super::profile::DetectorProfile;
use crate::error::{invalid, Result};
use crate::imgcore::{convolve_separable, gaussian_kernel, sobel_gradients, GrayImage, Keypoint, KeypointList};

const WINDOW_SIGMA: f32 = 1.0;

/// Gaussian-windowed second-moment matrix entries per pixel.
#[derive(Debug, Clone)]
pub struct StructureTensor {
    pub width: usize,
    pub height: usize,
    pub xx: Vec<f32>,
    pub xy: Vec<f32>,
    pub yy: Vec<f32>,
}

fn check_size(img: &GrayImage) -> Result<()> {
    if img.width() < 5 || img.height() < 5 {
        return Err(invalid!(
            "corner response needs at least 5x5 pixels, got {}x{}",
            img.width(),
            img.height()
        ));
    }
    Ok(())
}

pub fn structure_tensor(img: &GrayImage) -> Result<StructureTensor> {
    check_size(img)?;
    let g = sobel_gradients(img)?;
    let (w, h) = (img.width(), img.height());
    let kernel = gaussian_kernel(WINDOW_SIGMA);
    let smooth = |f: &dyn Fn(usize) -> f32| {
        let raw = GrayImage::new(w, h, (0..w * h).map(f).collect()).expect("finite products");
        convolve_separable(&raw, &kernel).into_data()
    };
    Ok(StructureTensor {
        width: w,
        height: h,
        xx: smooth(&|i| g.gx[i] * g.gx[i]),
        xy: smooth(&|i| g.gx[i] * g.gy[i]),
        yy: smooth(&|i| g.gy[i] * g.gy[i]),
    })
}

/// `det(M) - k * trace(M)^2` per pixel.
pub fn harris_response(img: &GrayImage, k: f32) -> Result<Vec<f32>> {
    let st = structure_tensor(img)?;
    Ok((0..st.xx.len())
        .map(|i| {
            let (a, b, c) = (st.xx[i] as f64, st.xy[i] as f64, st.yy[i] as f64);
            let tr = a + c;
            (a * c - b * b - k as f64 * tr * tr) as f32
        })
        .collect())
}

/// Smaller eigenvalue of the structure tensor per pixel.
pub fn min_eigen_response(img: &GrayImage) -> Result<Vec<f32>> {
    let st = structure_tensor(img)?;
    Ok((0..st.xx.len())
        .map(|i| {
            let (a, b, c) = (st.xx[i] as f64, st.xy[i] as f64, st.yy[i] as f64);
            let half_tr = 0.5 * (a + c);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            (half_tr - disc).max(0.0) as f32
        })
        .collect())
}

/// Keeps pixels whose response exceeds `rel_t * max` (only when max > 0), then suppresses.
pub fn threshold_and_suppress(
    response: &[f32],
    width: usize,
    height: usize,
    rel_t: f32,
    nms_radius: usize,
) -> KeypointList {
    let max = response.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if !(max > 0.0) {
        return Vec::new();
    }
    let thresh = rel_t * max;
    let cands: Vec<Candidate> = response
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > thresh)
        .map(|(i, &r)| Candidate {
            x: i % width,
            y: i / width,
            score: r,
        })
        .collect();
    suppress(width, height, &cands, nms_radius)
        .into_iter()
        .map(|c| Keypoint::with_score(c.x as f32, c.y as f32, c.score))
        .collect()
}

pub fn detect_harris(img: &GrayImage, profile: &DetectorProfile) -> Result<KeypointList> {
    let r = harris_response(img, profile.harris_k)?;
    Ok(threshold_and_suppress(
        &r,
        img.width(),
        img.height(),
        profile.harris_rel_t,
        profile.nms_radius as usize,
    ))
}

pub fn detect_shi_tomasi(img: &GrayImage, profile: &DetectorProfile) -> Result<KeypointList> {
    let r = min_eigen_response(img)?;
    Ok(threshold_and_suppress(
        &r,
        img.width(),
        img.height(),
        profile.shi_rel_t,
        profile.nms_radius as usize,
    ))
}
