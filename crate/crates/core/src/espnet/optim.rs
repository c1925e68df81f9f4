use indexmap::IndexMap;

use super::tensor::Tensor;
use super::weights::ModelWeights;
use crate::error::{invalid, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Cosine-annealed learning rate from `lr_max` at step 0 to `lr_min` at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, lr_max: f64, lr_min: f64) -> Result<f64> {
    if total_steps == 0 || step > total_steps {
        return Err(invalid!("step {step} outside 0..={total_steps}"));
    }
    if step == 0 {
        return Ok(lr_max);
    }
    if step == total_steps {
        return Ok(lr_min);
    }
    let t = std::f64::consts::PI * step as f64 / total_steps as f64;
    Ok(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + t.cos()))
}

/// First and second moment estimates per trainable parameter.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub step: u64,
    m: IndexMap<String, Vec<f64>>,
    v: IndexMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One Adam update of every parameter named in `grads`.
pub fn optimizer_step(
    weights: &mut ModelWeights,
    grads: &IndexMap<String, Tensor<f32>>,
    lr: f64,
    state: &mut AdamState,
) -> Result<()> {
    for (name, g) in grads {
        let p = weights
            .get(name)
            .ok_or_else(|| invalid!("gradient for unknown parameter {name:?}"))?;
        if p.shape() != g.shape() {
            return Err(invalid!(
                "gradient for {name:?} has shape {:?}, parameter has {:?}",
                g.shape(),
                p.shape()
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (name, g) in grads {
        let p = weights.get_mut(name).expect("checked above");
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
        for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            let gi = f64::from(gi);
            *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
            *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
            let update = lr * (*mi / c1) / ((*vi / c2).sqrt() + ADAM_EPS);
            *pi = (f64::from(*pi) - update) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_weights(v: f32) -> ModelWeights {
        let mut w = ModelWeights::default();
        w.insert("p", Tensor::from_vec(&[1], vec![v]).unwrap());
        w
    }

    fn grad(v: f32) -> IndexMap<String, Tensor<f32>> {
        IndexMap::from([("p".to_string(), Tensor::from_vec(&[1], vec![v]).unwrap())])
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 10, 1e-3, 1e-5).unwrap(), 1e-3);
        assert_eq!(cosine_lr(10, 10, 1e-3, 1e-5).unwrap(), 1e-5);
        assert!((cosine_lr(5, 10, 1e-3, 1e-5).unwrap() - (1e-3 + 1e-5) / 2.0).abs() < 1e-12);
        assert!(cosine_lr(11, 10, 1e-3, 1e-5).is_err());
        assert!(cosine_lr(0, 0, 1e-3, 1e-5).is_err());
    }

    #[test]
    fn zero_grad_keeps_weights() {
        let mut w = scalar_weights(0.7);
        let mut s = AdamState::new();
        optimizer_step(&mut w, &grad(0.0), 0.1, &mut s).unwrap();
        assert_eq!(w.get("p").unwrap().data()[0], 0.7);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut w = scalar_weights(1.0);
        let mut s = AdamState::new();
        optimizer_step(&mut w, &grad(1.0), 0.1, &mut s).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction.
        let expect = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((f64::from(w.get("p").unwrap().data()[0]) - expect).abs() < 1e-6);
    }

    #[test]
    fn stateful() {
        let mut a = scalar_weights(1.0);
        let mut sa = AdamState::new();
        optimizer_step(&mut a, &grad(1.0), 0.1, &mut sa).unwrap();
        optimizer_step(&mut a, &grad(0.5), 0.1, &mut sa).unwrap();
        let mut b = scalar_weights(1.0);
        let mut sb = AdamState::new();
        optimizer_step(&mut b, &grad(0.5), 0.2, &mut sb).unwrap();
        assert_ne!(a.get("p").unwrap().data()[0], b.get("p").unwrap().data()[0]);
    }

    #[test]
    fn mismatched_grad() {
        let mut w = scalar_weights(1.0);
        let bad = IndexMap::from([("p".to_string(), Tensor::zeros(&[2]))]);
        assert!(optimizer_step(&mut w, &bad, 0.1, &mut AdamState::new()).is_err());
        let unknown = IndexMap::from([("q".to_string(), Tensor::zeros(&[1]))]);
        assert!(optimizer_step(&mut w, &unknown, 0.1, &mut AdamState::new()).is_err());
    }
}
