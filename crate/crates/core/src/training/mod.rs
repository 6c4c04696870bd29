//! Mini-batch SGD training with plateau annealing for every model variant.

mod data;
mod optim;
mod preprocess;

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evaluation::compute_report;
use crate::model::{images_to_tensor, maps_to_tensor, ModelConfig, OverlayModel};
use crate::{Error, Result};

pub use data::{class_counts, load_examples, Example};
pub use optim::{bce_with_logits, Sgd};
pub use preprocess::{resize_and_pad, resize_and_pad_map, Fit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub anneal_factor: f64,
    pub plateau_epsilon: f64,
    pub plateau_patience_epochs: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub target_side: usize,
    /// Training stops once the learning rate falls below this.
    pub min_lr: f64,
    /// Hand back the weights of the epoch with the lowest validation loss
    /// rather than the last epoch's.
    pub restore_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lr0: 0.015,
            momentum: 0.9,
            weight_decay: 1e-5,
            anneal_factor: 0.5,
            plateau_epsilon: 1e-4,
            plateau_patience_epochs: 1,
            max_epochs: 30,
            seed: 0,
            target_side: 224,
            min_lr: 1e-5,
            restore_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size as f64),
            ("lr0", self.lr0),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("plateau_epsilon", self.plateau_epsilon),
            ("plateau_patience_epochs", self.plateau_patience_epochs as f64),
            ("max_epochs", self.max_epochs as f64),
            ("target_side", self.target_side as f64),
            ("min_lr", self.min_lr),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.anneal_factor > 0.0 && self.anneal_factor < 1.0) {
            return Err(Error::Config(format!(
                "anneal_factor must lie in (0, 1), got {}",
                self.anneal_factor
            )));
        }
        if self.target_side % 2 != 0 {
            return Err(Error::Config(format!("target_side must be even, got {}", self.target_side)));
        }
        Ok(())
    }
}

/// One row of the training history. Validation metrics are taken at the 0.5
/// threshold and are absent when the validation set holds a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auc: Option<f64>,
    pub val_precision: Option<f64>,
    pub val_recall: Option<f64>,
    pub val_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub current_lr: f64,
    pub best_val_loss: f64,
    pub best_epoch: Option<usize>,
    pub epochs_since_improvement: usize,
    pub plateau_events: u32,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            epoch: 0,
            current_lr: cfg.lr0,
            best_val_loss: f64::INFINITY,
            best_epoch: None,
            epochs_since_improvement: 0,
            plateau_events: 0,
            history: Vec::new(),
        }
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.train_loss).collect()
    }
}

/// Feeds one epoch's validation loss into the schedule. A loss that fails to
/// beat the best by more than `plateau_epsilon` counts toward a plateau; after
/// `plateau_patience_epochs` of those the rate is annealed and the count resets.
pub fn plateau_step(state: &TrainState, new_val_loss: f64, cfg: &TrainConfig) -> TrainState {
    let mut next = state.clone();
    if new_val_loss < state.best_val_loss - cfg.plateau_epsilon {
        next.best_val_loss = new_val_loss;
        next.best_epoch = Some(state.epoch);
        next.epochs_since_improvement = 0;
    } else {
        next.epochs_since_improvement += 1;
        if next.epochs_since_improvement >= cfg.plateau_patience_epochs {
            next.plateau_events += 1;
            next.epochs_since_improvement = 0;
            // Recomputed from lr0 so repeated halving never drifts.
            next.current_lr = cfg.lr0 * cfg.anneal_factor.powi(next.plateau_events as i32);
        }
    }
    next.epoch = state.epoch + 1;
    next
}

/// Batch tensors `(images, maps, targets)` for the given example indices.
fn batch(examples: &[Example], idx: &[usize]) -> Result<(Tensor, Tensor, Tensor)> {
    let images: Vec<_> = idx.iter().map(|&i| &examples[i].image).collect();
    let maps: Vec<_> = idx.iter().map(|&i| &examples[i].map).collect();
    let y: Vec<f32> = idx.iter().map(|&i| examples[i].target).collect();
    Ok((
        images_to_tensor(&images)?,
        maps_to_tensor(&maps)?,
        Tensor::from_vec(y, idx.len(), &Device::Cpu)?,
    ))
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Splits a permutation into batches, folding a trailing single example into
/// the previous batch (batch statistics need at least two samples).
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().map(|b| b.len()) == Some(1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().expect("non-empty") = &order[start..];
    }
    out
}

/// Inference-mode loss and probabilities over a whole set.
pub fn evaluate(model: &OverlayModel, examples: &[Example], batch_size: usize) -> Result<(f64, Vec<f64>)> {
    let idx: Vec<usize> = (0..examples.len()).collect();
    let (mut total, mut probs) = (0.0, Vec::with_capacity(examples.len()));
    for b in idx.chunks(batch_size) {
        let (x, f, y) = batch(examples, b)?;
        let z = model.logits(&x, &f, false)?;
        total += scalar(&bce_with_logits(&z, &y)?)? * b.len() as f64;
        probs.extend(candle_nn::ops::sigmoid(&z)?.to_dtype(DType::F64)?.to_vec1::<f64>()?);
    }
    Ok((total / examples.len() as f64, probs))
}

fn check_inputs(train: &[Example], val: &[Example], model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    model_cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let (pos, neg) = class_counts(train);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    if model_cfg.image_side != cfg.target_side {
        return Err(Error::Config(format!(
            "model image_side {} differs from training target_side {}",
            model_cfg.image_side, cfg.target_side
        )));
    }
    let (side, grid) = (cfg.target_side, cfg.target_side / 2);
    for e in train.iter().chain(val) {
        if (e.image.height(), e.image.width()) != (side, side) || (e.map.height(), e.map.width()) != (grid, grid) {
            return Err(Error::ShapeMismatch(format!(
                "example {} is not on the {side}x{side} training canvas",
                e.id
            )));
        }
    }
    Ok(())
}

/// Trains a fresh model of `model_cfg` (initialised from `cfg.seed`) and
/// returns it with the full schedule history.
pub fn train(
    train_set: &[Example],
    val_set: &[Example],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(OverlayModel, TrainState)> {
    check_inputs(train_set, val_set, model_cfg, cfg)?;
    let model = OverlayModel::new(ModelConfig {
        seed: cfg.seed,
        ..model_cfg.clone()
    })?;
    let mut opt = Sgd::new(model.params(), cfg.momentum, cfg.weight_decay);
    let mut state = TrainState::new(cfg);
    let mut best = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let val_labels: Vec<bool> = val_set.iter().map(Example::is_positive).collect();
    log::info!(
        "training {} on {} examples ({} val), {} trainable parameters",
        model.variant(),
        train_set.len(),
        val_set.len(),
        model.params().num_trainable()
    );

    while state.epoch < cfg.max_epochs {
        let epoch = state.epoch;
        let lr = state.current_lr;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut total = 0.0;
        for b in batches(&order, cfg.batch_size) {
            let (x, f, y) = batch(train_set, b)?;
            let loss = bce_with_logits(&model.logits(&x, &f, true)?, &y)?;
            let value = scalar(&loss)?;
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, loss: value });
            }
            opt.backward_step(&loss, lr)?;
            total += value * b.len() as f64;
        }
        let train_loss = total / train_set.len() as f64;
        if !model.params().all_finite()? {
            return Err(Error::Diverged { epoch, loss: f64::NAN });
        }

        let (val_loss, probs) = evaluate(&model, val_set, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: val_loss });
        }
        let report = compute_report(&probs, &val_labels, 0.5).ok();
        state.history.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
            val_auc: report.as_ref().map(|r| r.auc),
            val_precision: report.as_ref().map(|r| r.precision),
            val_recall: report.as_ref().map(|r| r.recall),
            val_f1: report.as_ref().map(|r| r.f1),
        });
        log::info!(
            "epoch {epoch}: lr {lr:.6} train {train_loss:.4} val {val_loss:.4} f1 {}",
            report.as_ref().map_or("n/a".to_string(), |r| format!("{:.3}", r.f1))
        );

        state = plateau_step(&state, val_loss, cfg);
        if state.best_epoch == Some(epoch) && cfg.restore_best {
            best = Some(model.params().to_raw()?);
        }
        if state.current_lr < cfg.min_lr {
            log::info!("learning rate {} below {}, stopping", state.current_lr, cfg.min_lr);
            break;
        }
    }
    if let Some(raw) = best {
        model.params().load_raw(&raw)?;
    }
    Ok((model, state))
}

pub fn write_history_csv(path: &Path, state: &TrainState) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &state.history {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests;
