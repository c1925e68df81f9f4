use crate::error::{invalid, Result};

/// 8-bit interleaved RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid!("image dimensions must be positive, got {width}x{height}"));
        }
        if data.len() != 3 * width * height {
            return Err(invalid!(
                "rgb buffer length {} does not match {}x{}x3",
                data.len(),
                width,
                height
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0);
        let data = rgb.iter().copied().cycle().take(3 * width * height).collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Replicates a gray raster into all three channels, rounding and clamping to 8 bits.
    pub fn from_gray(gray: &GrayImage) -> Self {
        let data = gray
            .data()
            .iter()
            .flat_map(|&v| {
                let b = v.round().clamp(0.0, 255.0) as u8;
                [b, b, b]
            })
            .collect();
        Self {
            width: gray.width(),
            height: gray.height(),
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Single-channel float raster with intensities on the 0–255 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid!("image dimensions must be positive, got {width}x{height}"));
        }
        if data.len() != width * height {
            return Err(invalid!(
                "gray buffer length {} does not match {}x{}",
                data.len(),
                width,
                height
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid!("non-finite intensity at index {i}"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
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

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Reads with reflect-101 addressing for out-of-range coordinates.
    #[inline]
    pub fn get_reflect(&self, x: isize, y: isize) -> f32 {
        self.get(reflect101(x, self.width), reflect101(y, self.height))
    }

    /// Bilinear sample at a real-valued position, reflect-101 outside the raster.
    pub fn sample_bilinear(&self, x: f32, y: f32) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.get_reflect(xi, yi);
        let b = self.get_reflect(xi + 1, yi);
        let c = self.get_reflect(xi, yi + 1);
        let d = self.get_reflect(xi + 1, yi + 1);
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }

    pub fn transpose(&self) -> GrayImage {
        GrayImage::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Reflect-101 index mapping (`dcb|abcd|cba`), valid for any offset.
#[inline]
pub fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// Resizes a gray raster with bilinear interpolation (pixel-center aligned).
pub fn resize_bilinear(img: &GrayImage, width: usize, height: usize) -> GrayImage {
    let sx = img.width() as f32 / width as f32;
    let sy = img.height() as f32 / height as f32;
    GrayImage::from_fn(width, height, |x, y| {
        let src_x = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (img.width() - 1) as f32);
        let src_y = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (img.height() - 1) as f32);
        img.sample_bilinear(src_x, src_y)
    })
}

/// Per-channel bilinear resize of an RGB raster.
pub fn resize_rgb_bilinear(img: &RgbImage, width: usize, height: usize) -> RgbImage {
    if img.width() == width && img.height() == height {
        return img.clone();
    }
    let channels: Vec<GrayImage> = (0..3)
        .map(|c| {
            let plane = GrayImage::from_fn(img.width(), img.height(), |x, y| img.pixel(x, y)[c] as f32);
            resize_bilinear(&plane, width, height)
        })
        .collect();
    RgbImage::from_fn(width, height, |x, y| {
        let px = |c: usize| channels[c].get(x, y).round().clamp(0.0, 255.0) as u8;
        [px(0), px(1), px(2)]
    })
}
