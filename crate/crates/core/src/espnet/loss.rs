use super::ops::sigmoid;
use super::tensor::{Scalar, Tensor};
use crate::error::{invalid, Result};
use crate::imgcore::BinaryMask;

fn check_len<T: Scalar>(y: &[u8], z: &Tensor<T>) -> Result<()> {
    if y.len() != z.len() {
        return Err(invalid!(
            "label has {} pixels but logits have shape {:?}",
            y.len(),
            z.shape()
        ));
    }
    if z.is_empty() {
        return Err(invalid!("empty logits"));
    }
    Ok(())
}

/// Mean binary cross-entropy on raw logits over flat 0/1 labels.
///
/// Uses `max(z, 0) - z*y + ln(1 + exp(-|z|))`, finite for any finite `z`.
pub fn bce_loss_flat<T: Scalar>(y: &[u8], z: &Tensor<T>) -> Result<f64> {
    check_len(y, z)?;
    let sum: f64 = y
        .iter()
        .zip(z.data())
        .map(|(&yi, &zi)| {
            let z = zi.as_f64();
            z.max(0.0) - z * f64::from(yi) + (-z.abs()).exp().ln_1p()
        })
        .sum();
    Ok(sum / z.len() as f64)
}

/// `(sigmoid(z) - y) / N` for every logit.
pub fn bce_grad_flat<T: Scalar>(y: &[u8], z: &Tensor<T>) -> Result<Tensor<T>> {
    check_len(y, z)?;
    let n = z.len() as f64;
    let data = y
        .iter()
        .zip(z.data())
        .map(|(&yi, &zi)| T::lit((sigmoid(zi.as_f64()) - f64::from(yi)) / n))
        .collect();
    Tensor::from_vec(z.shape(), data)
}

fn check_mask<T: Scalar>(y: &BinaryMask, z: &Tensor<T>) -> Result<()> {
    let plane = match z.shape() {
        [h, w] => Some((*h, *w)),
        [1, h, w] | [1, 1, h, w] => Some((*h, *w)),
        _ => None,
    };
    if plane != Some((y.height(), y.width())) {
        return Err(invalid!(
            "mask is {}x{} but logits have shape {:?}",
            y.width(),
            y.height(),
            z.shape()
        ));
    }
    Ok(())
}

/// Mean binary cross-entropy between a mask and a single logit plane.
pub fn bce_loss<T: Scalar>(y: &BinaryMask, z: &Tensor<T>) -> Result<f64> {
    check_mask(y, z)?;
    bce_loss_flat(y.data(), z)
}

/// Gradient of [`bce_loss`] with respect to the logits.
pub fn bce_grad<T: Scalar>(y: &BinaryMask, z: &Tensor<T>) -> Result<Tensor<T>> {
    check_mask(y, z)?;
    bce_grad_flat(y.data(), z)
}
