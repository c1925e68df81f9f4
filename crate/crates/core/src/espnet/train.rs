use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{bce_grad_flat, bce_loss_flat};
use super::model::{espnet_backward, espnet_forward, init_weights, update_running_stats, Mode, STRIDE};
use super::optim::{cosine_lr, optimizer_step, AdamState};
use super::tensor::Tensor;
use super::weights::{is_buffer, ModelWeights};
use crate::error::{invalid, Error, Result};
use crate::fusion::LabeledSample;
use crate::imgcore::{load_image, load_mask, resize_rgb_bilinear};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub batch_size: usize,
    pub tau_default: f64,
    pub seed: u64,
    /// Square side every sample is resized to; a multiple of 8.
    pub input_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr_max: 1e-3,
            lr_min: 1e-5,
            batch_size: 64,
            tau_default: 0.5,
            seed: 0,
            input_size: 480,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid!("epochs must be at least 1"));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return Err(invalid!(
                "need 0 < lr_min <= lr_max, got lr_min={} lr_max={}",
                self.lr_min,
                self.lr_max
            ));
        }
        if self.batch_size == 0 {
            return Err(invalid!("batch_size must be at least 1"));
        }
        if !(self.tau_default > 0.0 && self.tau_default < 1.0) {
            return Err(invalid!("tau_default must lie in (0, 1), got {}", self.tau_default));
        }
        if self.input_size == 0 || self.input_size % STRIDE != 0 {
            return Err(invalid!("input_size must be a positive multiple of {STRIDE}, got {}", self.input_size));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub weights: ModelWeights,
    pub loss_log: Vec<EpochLoss>,
    /// 1-based epoch the returned weights come from.
    pub best_epoch: usize,
}

/// One resized sample: `3 * s * s` normalized pixels and `s * s` labels.
struct Item {
    pixels: Vec<f32>,
    label: Vec<u8>,
}

fn load_item(s: &LabeledSample, size: usize) -> Result<Item> {
    let img = resize_rgb_bilinear(&load_image(&s.image_path)?, size, size);
    let mask = load_mask(&s.mask_path)?.resize_nearest(size, size);
    let x = super::model::images_to_tensor::<f32>(&[&img])?;
    Ok(Item {
        pixels: x.into_data(),
        label: mask.data().to_vec(),
    })
}

fn load_items(samples: &[LabeledSample], size: usize) -> Vec<Item> {
    let loaded: Vec<Result<Item>> = samples.par_iter().map(|s| load_item(s, size)).collect();
    loaded
        .into_iter()
        .zip(samples)
        .filter_map(|(r, s)| match r {
            Ok(item) => Some(item),
            Err(e) => {
                log::warn!("skipping sample {}: {e}", s.image_path.display());
                None
            }
        })
        .collect()
}

fn batch(items: &[&Item], size: usize) -> Result<(Tensor<f32>, Vec<u8>)> {
    let mut pixels = Vec::with_capacity(items.len() * 3 * size * size);
    let mut labels = Vec::with_capacity(items.len() * size * size);
    for it in items {
        pixels.extend_from_slice(&it.pixels);
        labels.extend_from_slice(&it.label);
    }
    Ok((Tensor::from_vec(&[items.len(), 3, size, size], pixels)?, labels))
}

fn eval_loss(weights: &ModelWeights, items: &[Item], cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    for chunk in items.chunks(cfg.batch_size) {
        let refs: Vec<&Item> = chunk.iter().collect();
        let (x, y) = batch(&refs, cfg.input_size)?;
        let (z, _) = espnet_forward(&x, weights, Mode::Eval)?;
        total += bce_loss_flat(&y, &z)? * chunk.len() as f64;
    }
    Ok(total / items.len() as f64)
}

/// Trains with validation on the training samples themselves.
pub fn train(samples: &[LabeledSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_validation(samples, &[], cfg)
}

/// Adam with cosine-annealed learning rate over all batch steps; keeps the weights with the lowest
/// validation loss. An empty `val` validates on `train`.
pub fn train_with_validation(train: &[LabeledSample], val: &[LabeledSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(invalid!("no training samples"));
    }
    let train_items = load_items(train, cfg.input_size);
    if train_items.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let val_items = load_items(val, cfg.input_size);
    let val_set: &[Item] = if val_items.is_empty() { &train_items } else { &val_items };
    log::info!(
        "training on {} samples, validating on {}",
        train_items.len(),
        val_set.len()
    );

    let mut weights = init_weights(cfg.seed);
    let mut adam = AdamState::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let steps_per_epoch = train_items.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut order: Vec<usize> = (0..train_items.len()).collect();
    let mut step = 0;
    let mut log_rows = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelWeights)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&Item> = chunk.iter().map(|&i| &train_items[i]).collect();
            let (x, y) = batch(&refs, cfg.input_size)?;
            let (z, cache) = espnet_forward(&x, &weights, Mode::Train)?;
            let loss = bce_loss_flat(&y, &z)?;
            if !loss.is_finite() {
                return Err(invalid!("training diverged at epoch {epoch} (loss {loss})"));
            }
            epoch_loss += loss * chunk.len() as f64;
            let gz = bce_grad_flat(&y, &z)?;
            let (grads, _) = espnet_backward(&cache, &weights, &gz)?;
            let lr = cosine_lr(step, total_steps, cfg.lr_max, cfg.lr_min)?;
            optimizer_step(&mut weights, &grads, lr, &mut adam)?;
            update_running_stats(&mut weights, &cache)?;
            step += 1;
        }
        let train_loss = epoch_loss / train_items.len() as f64;
        let val_loss = eval_loss(&weights, val_set, cfg)?;
        log::info!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        log_rows.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });
        if best.as_ref().map_or(true, |(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, weights.clone()));
        }
    }
    let (_, best_epoch, weights) = best.expect("at least one epoch");
    debug_assert!(weights.iter().all(|(n, t)| is_buffer(n) || t.all_finite()));
    Ok(TrainOutcome {
        weights,
        loss_log: log_rows,
        best_epoch,
    })
}

pub fn loss_log_to_csv(log: &[EpochLoss]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for r in log {
        writeln!(s, "{},{},{}", r.epoch, r.train_loss, r.val_loss).expect("write to string");
    }
    s
}

pub fn write_loss_log(log: &[EpochLoss], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, loss_log_to_csv(log)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        TrainConfig::default().validate().unwrap();
        let bad = [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { lr_min: 0.0, ..Default::default() },
            TrainConfig { lr_min: 1.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { tau_default: 1.0, ..Default::default() },
            TrainConfig { input_size: 60, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epochs": 3, "momentum": 0.9}"#).is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.batch_size, 64);
    }

    #[test]
    fn empty_samples() {
        assert!(train(&[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn csv_header() {
        let log = [EpochLoss { epoch: 1, train_loss: 0.5, val_loss: 0.25 }];
        assert_eq!(loss_log_to_csv(&log), "epoch,train_loss,val_loss\n1,0.5,0.25\n");
    }
}
