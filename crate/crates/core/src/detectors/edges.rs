use std::collections::VecDeque;

use super::profile::DetectorProfile;
use crate::error::{invalid, Result};
use crate::imgcore::{gaussian_blur, sobel_gradients, EdgeMap, GrayImage};

const CANNY_SIGMA: f32 = 1.4;

/// Quantizes a gradient direction to one of four neighbour offsets (pointing along the gradient).
pub fn quantize_direction(gx: f32, gy: f32) -> (isize, isize) {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if !(22.5..157.5).contains(&angle) {
        (1, 0)
    } else if angle < 67.5 {
        (1, 1)
    } else if angle < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

pub fn edges_canny(img: &GrayImage, profile: &DetectorProfile) -> Result<EdgeMap> {
    let (w, h) = (img.width(), img.height());
    if w < 5 || h < 5 {
        return Err(invalid!("canny needs at least 5x5 pixels, got {w}x{h}"));
    }
    let blurred = gaussian_blur(img, CANNY_SIGMA)?;
    let g = sobel_gradients(&blurred)?;
    let mag = g.magnitude();
    let at = |x: isize, y: isize| -> f32 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };

    // Thin: strictly above the forward neighbour, at least the backward one.
    let mut thin = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let (dx, dy) = quantize_direction(g.gx[i], g.gy[i]);
            let (xi, yi) = (x as isize, y as isize);
            if m > at(xi + dx, yi + dy) && m >= at(xi - dx, yi - dy) {
                thin[i] = m;
            }
        }
    }

    let mut out = EdgeMap::zeros(w, h);
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= profile.canny_hi && m > 0.0 {
            out.set(i % w, i / w, true);
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                let j = ny * w + nx;
                if !out.get(nx, ny) && thin[j] >= profile.canny_lo && thin[j] > 0.0 {
                    out.set(nx, ny, true);
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(out)
}

/// Thresholded Sobel magnitude; edges stay thick.
pub fn edges_sobel(img: &GrayImage, profile: &DetectorProfile) -> Result<EdgeMap> {
    let g = sobel_gradients(img)?;
    let mag = g.magnitude();
    Ok(EdgeMap::from_fn(img.width(), img.height(), |x, y| {
        mag[y * img.width() + x] > profile.sobel_mag_t
    }))
}
