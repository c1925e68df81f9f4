use crate::error::{invalid, Result};

/// Per-pixel {0, 1} raster. Used for supervision labels, edge maps and predicted masks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// Edge detector output; same representation as any other binary mask.
pub type EdgeMap = BinaryMask;

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid!("mask dimensions must be positive, got {width}x{height}"));
        }
        if data.len() != width * height {
            return Err(invalid!(
                "mask buffer length {} does not match {}x{}",
                data.len(),
                width,
                height
            ));
        }
        if let Some(i) = data.iter().position(|&v| v > 1) {
            return Err(invalid!("mask value {} at index {i} is not 0 or 1", data[i]));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.data[y * width + x] = 1;
                }
            }
        }
        m
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

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.same_dims(other) && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }

    pub fn iou(&self, other: &BinaryMask) -> f64 {
        assert!(self.same_dims(other));
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.data.iter().zip(&other.data) {
            inter += (a & b) as usize;
            union += (a | b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Nearest-neighbour resize (keeps the mask binary).
    pub fn resize_nearest(&self, width: usize, height: usize) -> BinaryMask {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        BinaryMask::from_fn(width, height, |x, y| {
            let src_x = (((x as f64 + 0.5) * sx) as usize).min(self.width - 1);
            let src_y = (((y as f64 + 0.5) * sy) as usize).min(self.height - 1);
            self.get(src_x, src_y)
        })
    }
}
