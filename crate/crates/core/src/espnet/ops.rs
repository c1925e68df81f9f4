//! Differentiable primitives on `[batch, channels, height, width]` tensors.
//!
//! Forward functions are pure; backward functions take what the forward saw plus the
//! upstream gradient. Batch items are processed in parallel and reduced in index order,
//! so results are bit-identical regardless of scheduling.

use rayon::prelude::*;

use super::tensor::{matmul, Scalar, Tensor};
use crate::error::{invalid, Result};

/// Stride, dilation and zero padding of a square-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub const fn new(stride: usize, dilation: usize, padding: usize) -> Self {
        Self {
            stride,
            dilation,
            padding,
        }
    }

    /// Same-size geometry for a `k x k` kernel at the given dilation.
    pub const fn same(k: usize, dilation: usize) -> Self {
        Self::new(1, dilation, dilation * (k - 1) / 2)
    }

    pub fn out_extent(&self, input: usize, k: usize) -> Option<usize> {
        let span = self.dilation * (k - 1) + 1;
        let padded = input + 2 * self.padding;
        if padded < span || self.stride == 0 {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }

    fn is_pointwise(&self, kh: usize, kw: usize) -> bool {
        kh == 1 && kw == 1 && self.stride == 1 && self.padding == 0
    }
}

struct ConvShape {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

fn conv_shape<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, g: ConvGeometry) -> Result<ConvShape> {
    let (n, cin, h, wd) = x.dims4()?;
    let (cout, wcin, kh, kw) = w.dims4()?;
    if wcin != cin {
        return Err(invalid!(
            "conv input has shape {:?} but kernel has shape {:?}",
            x.shape(),
            w.shape()
        ));
    }
    let (Some(ho), Some(wo)) = (g.out_extent(h, kh), g.out_extent(wd, kw)) else {
        return Err(invalid!(
            "kernel {:?} with {g:?} does not fit input {:?}",
            w.shape(),
            x.shape()
        ));
    };
    Ok(ConvShape {
        n,
        cin,
        h,
        w: wd,
        cout,
        kh,
        kw,
        ho,
        wo,
    })
}

fn im2col<T: Scalar>(x: &[T], s: &ConvShape, g: ConvGeometry, cols: &mut [T]) {
    let p = s.ho * s.wo;
    for c in 0..s.cin {
        for ki in 0..s.kh {
            for kj in 0..s.kw {
                let row = (c * s.kh + ki) * s.kw + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..s.ho {
                    let iy = (oy * g.stride + ki * g.dilation) as isize - g.padding as isize;
                    let drow = &mut dst[oy * s.wo..(oy + 1) * s.wo];
                    if iy < 0 || iy >= s.h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let src = &x[(c * s.h + iy as usize) * s.w..(c * s.h + iy as usize + 1) * s.w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj * g.dilation) as isize - g.padding as isize;
                        *d = if ix < 0 || ix >= s.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], s: &ConvShape, g: ConvGeometry, x: &mut [T]) {
    let p = s.ho * s.wo;
    for c in 0..s.cin {
        for ki in 0..s.kh {
            for kj in 0..s.kw {
                let row = (c * s.kh + ki) * s.kw + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..s.ho {
                    let iy = (oy * g.stride + ki * g.dilation) as isize - g.padding as isize;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let base = (c * s.h + iy as usize) * s.w;
                    for ox in 0..s.wo {
                        let ix = (ox * g.stride + kj * g.dilation) as isize - g.padding as isize;
                        if ix >= 0 && ix < s.w as isize {
                            x[base + ix as usize] += src[oy * s.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation `y[n, o] = b[o] + sum_c w[o, c] * x[n, c]` with dilation and zero padding.
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, g: ConvGeometry) -> Result<Tensor<T>> {
    let s = conv_shape(x, w, g)?;
    if b.len() != s.cout {
        return Err(invalid!("bias has {} entries for {} output channels", b.len(), s.cout));
    }
    let k = s.cin * s.kh * s.kw;
    let p = s.ho * s.wo;
    let mut out = Tensor::zeros(&[s.n, s.cout, s.ho, s.wo]);
    let pointwise = g.is_pointwise(s.kh, s.kw);
    out.data_mut()
        .par_chunks_mut(s.cout * p)
        .enumerate()
        .for_each(|(i, y)| {
            for (o, row) in y.chunks_mut(p).enumerate() {
                row.fill(b.data()[o]);
            }
            let xi = x.item(i);
            if pointwise {
                matmul(w.data(), false, xi, false, y, s.cout, k, p, true);
            } else {
                let mut cols = vec![T::zero(); k * p];
                im2col(xi, &s, g, &mut cols);
                matmul(w.data(), false, &cols, false, y, s.cout, k, p, true);
            }
        });
    Ok(out)
}

/// Gradients of [`conv2d_forward`] with respect to input, kernel and bias.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
    g: ConvGeometry,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let s = conv_shape(x, w, g)?;
    if grad_out.shape() != [s.n, s.cout, s.ho, s.wo] {
        return Err(invalid!(
            "grad_out shape {:?} does not match conv output [{}, {}, {}, {}]",
            grad_out.shape(),
            s.n,
            s.cout,
            s.ho,
            s.wo
        ));
    }
    let k = s.cin * s.kh * s.kw;
    let p = s.ho * s.wo;
    let pointwise = g.is_pointwise(s.kh, s.kw);
    let per_item: Vec<(Vec<T>, Vec<T>, Vec<T>)> = (0..s.n)
        .into_par_iter()
        .map(|i| {
            let go = grad_out.item(i);
            let xi = x.item(i);
            let mut gw = vec![T::zero(); s.cout * k];
            let gb: Vec<T> = go.chunks(p).map(|r| r.iter().copied().sum()).collect();
            let mut gx = vec![T::zero(); s.cin * s.h * s.w];
            if pointwise {
                matmul(go, false, xi, true, &mut gw, s.cout, p, k, false);
                matmul(w.data(), true, go, false, &mut gx, k, s.cout, p, false);
            } else {
                let mut cols = vec![T::zero(); k * p];
                im2col(xi, &s, g, &mut cols);
                matmul(go, false, &cols, true, &mut gw, s.cout, p, k, false);
                matmul(w.data(), true, go, false, &mut cols, k, s.cout, p, false);
                col2im(&cols, &s, g, &mut gx);
            }
            (gx, gw, gb)
        })
        .collect();

    let mut grad_x = Vec::with_capacity(x.len());
    let mut grad_w = Tensor::zeros(w.shape());
    let mut grad_b = Tensor::zeros(&[s.cout]);
    for (gx, gw, gb) in per_item {
        grad_x.extend_from_slice(&gx);
        for (a, v) in grad_w.data_mut().iter_mut().zip(gw) {
            *a += v;
        }
        for (a, v) in grad_b.data_mut().iter_mut().zip(gb) {
            *a += v;
        }
    }
    Ok((Tensor::from_vec(x.shape(), grad_x)?, grad_w, grad_b))
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU given its output (`y > 0` exactly where the input was positive).
pub fn relu_backward<T: Scalar>(y: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&yv, &g)| if yv > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(y.shape(), data).expect("same shape")
}

pub const NORM_EPS: f64 = 1e-5;
pub const NORM_MOMENTUM: f64 = 0.1;

/// Per-channel normalization followed by an affine map.
///
/// In training the statistics are the batch's own (and are differentiated through);
/// at inference the stored running statistics are used as constants.
#[derive(Debug, Clone)]
pub struct NormCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    /// Unbiased batch variance, for the running-statistics update.
    pub batch_var: Vec<T>,
    pub training: bool,
}

pub fn norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    training: bool,
) -> Result<(Tensor<T>, NormCache<T>)> {
    let (n, c, h, w) = x.dims4()?;
    for (name, t) in [("gamma", gamma), ("beta", beta), ("running_mean", running_mean), ("running_var", running_var)] {
        if t.len() != c {
            return Err(invalid!("norm {name} has {} entries for {c} channels", t.len()));
        }
    }
    let hw = h * w;
    let m = n * hw;
    let eps = T::lit(NORM_EPS);
    let (mean, var, unbiased): (Vec<T>, Vec<T>, Vec<T>) = if training {
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        let mut unbiased = vec![T::zero(); c];
        for ch in 0..c {
            let mut acc = 0f64;
            for b in 0..n {
                let off = (b * c + ch) * hw;
                acc += x.data()[off..off + hw].iter().map(|v| v.as_f64()).sum::<f64>();
            }
            let mu = acc / m as f64;
            let mut sq = 0f64;
            for b in 0..n {
                let off = (b * c + ch) * hw;
                sq += x.data()[off..off + hw].iter().map(|v| (v.as_f64() - mu).powi(2)).sum::<f64>();
            }
            mean[ch] = T::lit(mu);
            var[ch] = T::lit(sq / m as f64);
            unbiased[ch] = T::lit(if m > 1 { sq / (m - 1) as f64 } else { 0.0 });
        }
        (mean, var, unbiased)
    } else {
        (running_mean.data().to_vec(), running_var.data().to_vec(), running_var.data().to_vec())
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * hw;
            let (mu, is, ga, be) = (mean[ch], inv_std[ch], gamma.data()[ch], beta.data()[ch]);
            for i in off..off + hw {
                let xh = (x.data()[i] - mu) * is;
                xhat.data_mut()[i] = xh;
                y.data_mut()[i] = ga * xh + be;
            }
        }
    }
    Ok((
        y,
        NormCache {
            xhat,
            inv_std,
            batch_mean: mean,
            batch_var: unbiased,
            training,
        },
    ))
}

/// Returns `(grad_x, grad_gamma, grad_beta)`.
pub fn norm_backward<T: Scalar>(
    cache: &NormCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = grad_out.dims4()?;
    let hw = h * w;
    let m = (n * hw) as f64;
    let mut gx = Tensor::zeros(grad_out.shape());
    let mut gg = Tensor::zeros(&[c]);
    let mut gb = Tensor::zeros(&[c]);
    for ch in 0..c {
        let (mut sum_g, mut sum_gx) = (0f64, 0f64);
        for b in 0..n {
            let off = (b * c + ch) * hw;
            for i in off..off + hw {
                let g = grad_out.data()[i].as_f64();
                sum_g += g;
                sum_gx += g * cache.xhat.data()[i].as_f64();
            }
        }
        gb.data_mut()[ch] = T::lit(sum_g);
        gg.data_mut()[ch] = T::lit(sum_gx);
        let scale = gamma.data()[ch] * cache.inv_std[ch];
        let (mean_g, mean_gx) = (T::lit(sum_g / m), T::lit(sum_gx / m));
        for b in 0..n {
            let off = (b * c + ch) * hw;
            for i in off..off + hw {
                let g = grad_out.data()[i];
                gx.data_mut()[i] = if cache.training {
                    scale * (g - mean_g - cache.xhat.data()[i] * mean_gx)
                } else {
                    scale * g
                };
            }
        }
    }
    Ok((gx, gg, gb))
}

/// Per-axis source taps for a x2 bilinear upsample (half-pixel centers, edge clamped).
fn upsample_taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn upsample2x<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let mut out = Tensor::zeros(&[n, c, 2 * h, 2 * w]);
    let (oh, ow) = (2 * h, 2 * w);
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .zip(x.data().par_chunks(h * w))
        .for_each(|(dst, src)| {
            for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                let ly = T::lit(ly);
                for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                    let lx = T::lit(lx);
                    let top = src[y0 * w + x0] * (T::one() - lx) + src[y0 * w + x1] * lx;
                    let bot = src[y1 * w + x0] * (T::one() - lx) + src[y1 * w + x1] * lx;
                    dst[oy * ow + ox] = top * (T::one() - ly) + bot * ly;
                }
            }
        });
    Ok(out)
}

pub fn upsample2x_backward<T: Scalar>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, oh, ow) = grad_out.dims4()?;
    if oh % 2 != 0 || ow % 2 != 0 {
        return Err(invalid!("upsample gradient must have even extents, got {:?}", grad_out.shape()));
    }
    let (h, w) = (oh / 2, ow / 2);
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let mut gx = Tensor::zeros(&[n, c, h, w]);
    gx.data_mut()
        .par_chunks_mut(h * w)
        .zip(grad_out.data().par_chunks(oh * ow))
        .for_each(|(dst, src)| {
            for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                let ly = T::lit(ly);
                for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                    let lx = T::lit(lx);
                    let g = src[oy * ow + ox];
                    dst[y0 * w + x0] += g * (T::one() - ly) * (T::one() - lx);
                    dst[y0 * w + x1] += g * (T::one() - ly) * lx;
                    dst[y1 * w + x0] += g * ly * (T::one() - lx);
                    dst[y1 * w + x1] += g * ly * lx;
                }
            }
        });
    Ok(gx)
}

/// Channel-wise concatenation of equally-sized rank-4 tensors.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let (n, _, h, w) = parts
        .first()
        .ok_or_else(|| invalid!("nothing to concatenate"))?
        .dims4()?;
    let mut total_c = 0;
    for p in parts {
        let (pn, pc, ph, pw) = p.dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(invalid!("cannot concatenate {:?} with {:?}", parts[0].shape(), p.shape()));
        }
        total_c += pc;
    }
    let mut data = Vec::with_capacity(n * total_c * h * w);
    for b in 0..n {
        for p in parts {
            data.extend_from_slice(p.item(b));
        }
    }
    Tensor::from_vec(&[n, total_c, h, w], data)
}

/// Inverse of [`concat_channels`] for gradients.
pub fn split_channels<T: Scalar>(x: &Tensor<T>, channels: &[usize]) -> Result<Vec<Tensor<T>>> {
    let (n, c, h, w) = x.dims4()?;
    if channels.iter().sum::<usize>() != c {
        return Err(invalid!("split {channels:?} does not sum to {c}"));
    }
    let hw = h * w;
    let mut outs: Vec<Vec<T>> = channels.iter().map(|&pc| Vec::with_capacity(n * pc * hw)).collect();
    for b in 0..n {
        let item = x.item(b);
        let mut off = 0;
        for (o, &pc) in outs.iter_mut().zip(channels) {
            o.extend_from_slice(&item[off * hw..(off + pc) * hw]);
            off += pc;
        }
    }
    outs.into_iter()
        .zip(channels)
        .map(|(d, &pc)| Tensor::from_vec(&[n, pc, h, w], d))
        .collect()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
