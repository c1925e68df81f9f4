use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DET_EPS: f64 = 1e-12;
const W_EPS: f64 = 1e-12;

/// Row-major 3x3 projective transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    m: [f64; 9],
}

impl Homography {
    pub fn new(m: [f64; 9]) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("homography has non-finite entries".into()));
        }
        let h = Self { m };
        let det = h.det();
        if det.abs() <= DET_EPS {
            return Err(Error::SingularMatrix(det.abs()));
        }
        Ok(h)
    }

    pub fn identity() -> Self {
        Self {
            m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0],
        }
    }

    pub fn matrix(&self) -> &[f64; 9] {
        &self.m
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.m;
        let det = self.det();
        if det.abs() <= DET_EPS {
            return Err(Error::SingularMatrix(det.abs()));
        }
        let inv = [
            m[4] * m[8] - m[5] * m[7],
            m[2] * m[7] - m[1] * m[8],
            m[1] * m[5] - m[2] * m[4],
            m[5] * m[6] - m[3] * m[8],
            m[0] * m[8] - m[2] * m[6],
            m[2] * m[3] - m[0] * m[5],
            m[3] * m[7] - m[4] * m[6],
            m[1] * m[6] - m[0] * m[7],
            m[0] * m[4] - m[1] * m[3],
        ];
        Homography::new(inv.map(|v| v / det)).map(|h| h.normalized())
    }

    /// Scales so that `m[8] == 1` when possible, otherwise to unit Frobenius norm.
    pub fn normalized(&self) -> Self {
        let s = if self.m[8].abs() > 1e-12 {
            self.m[8]
        } else {
            self.m.iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        Self {
            m: self.m.map(|v| v / s),
        }
    }

    /// Unit Frobenius norm with a non-negative last entry; used to compare up to scale.
    pub fn frobenius_normalized(&self) -> [f64; 9] {
        let n = self.m.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sign = if self.m[8] < 0.0 { -1.0 } else { 1.0 };
        self.m.map(|v| sign * v / n)
    }

    /// Composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        let a = &self.m;
        let b = &other.m;
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = (0..3).map(|k| a[r * 3 + k] * b[k * 3 + c]).sum();
            }
        }
        Homography::new(out)
    }

    pub fn project(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let m = &self.m;
        let w = m[6] * x + m[7] * y + m[8];
        if w.abs() < W_EPS {
            return Err(Error::PointAtInfinity(w));
        }
        Ok((
            (m[0] * x + m[1] * y + m[2]) / w,
            (m[3] * x + m[4] * y + m[5]) / w,
        ))
    }
}

pub fn project_point(h: &Homography, p: (f64, f64)) -> Result<(f64, f64)> {
    h.project(p.0, p.1)
}
