//! The training loop: seeded shuffling, minibatch gradient averaging,
//! Adam updates, early stopping on validation loss, and best-epoch
//! weight restoration.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Window;
use crate::error::{PamError, Result};
use crate::model::{forward, ModelConfig, ModelParams};
use crate::tape::Tape;
use crate::tensor::{Real, Tensor};

use super::adam::{adam_step, AdamState, OptimConfig};
use super::loss::{hybrid_loss, loss_node, LossConfig};

/// What a training run did, epoch by epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean train-mode loss per epoch (dropout active).
    pub train_losses: Vec<f64>,
    /// Mean validation loss per epoch (dropout disabled, same loss
    /// function as training).
    pub val_losses: Vec<f64>,
    /// Zero-based epoch index whose weights were kept; always the
    /// argmin of `val_losses`.
    pub best_epoch: usize,
    /// Whether patience ran out before `max_epochs`.
    pub stopped_early: bool,
    /// Wall-clock training time. Excluded from any artifact that must
    /// be bit-identical across reruns.
    pub wall_seconds: f64,
}

/// Tracks the best validation loss seen so far. Only a strict
/// improvement resets the patience counter: a plateau counts toward
/// stopping just like a regression does.
struct EarlyStopper {
    best: f64,
    best_epoch: usize,
    streak: usize,
    patience: usize,
}

impl EarlyStopper {
    fn new(patience: usize) -> Self {
        Self {
            best: f64::INFINITY,
            best_epoch: 0,
            streak: 0,
            patience,
        }
    }

    /// Records one epoch's validation loss. Returns `(improved, stop)`.
    fn observe(&mut self, epoch: usize, val: f64) -> (bool, bool) {
        if val < self.best {
            self.best = val;
            self.best_epoch = epoch;
            self.streak = 0;
            (true, false)
        } else {
            self.streak += 1;
            (false, self.streak >= self.patience)
        }
    }
}

type CastWindow<T> = (Tensor<T>, Tensor<T>, usize);

fn cast_windows<T: Real>(windows: &[Window]) -> Vec<CastWindow<T>> {
    windows
        .iter()
        .map(|w| (w.x.cast::<T>(), w.y.cast::<T>(), w.tau_end))
        .collect()
}

/// Mean loss over windows with dropout disabled, using the training
/// loss function. Deterministic in the parameters: no generator state
/// is consumed.
fn eval_loss_cast<T: Real>(
    params: &ModelParams<T>,
    model_cfg: &ModelConfig,
    windows: &[CastWindow<T>],
    loss_cfg: &LossConfig,
) -> Result<f64> {
    // The generator is required by the forward signature but never
    // consulted when training is off.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut acc = 0.0f64;
    for (x, y, tau_end) in windows {
        let mut tape = Tape::new();
        let (pred, _) = forward(&mut tape, params, model_cfg, x, *tau_end, false, &mut rng)?;
        let loss = hybrid_loss(y, tape.value(pred), loss_cfg)?;
        acc += loss.to_f64();
    }
    Ok(acc / windows.len() as f64)
}

/// Mean loss over `windows` with dropout disabled, using the training
/// loss function — the quantity `fit` tracks for early stopping.
pub fn eval_loss<T: Real>(
    params: &ModelParams<T>,
    model_cfg: &ModelConfig,
    windows: &[Window],
    loss_cfg: &LossConfig,
) -> Result<f64> {
    if windows.is_empty() {
        return Err(PamError::Config("cannot evaluate zero windows".into()));
    }
    eval_loss_cast(params, model_cfg, &cast_windows::<T>(windows), loss_cfg)
}

/// Trains `params` in place and returns the per-epoch record.
///
/// Each epoch shuffles the train windows with the seeded generator,
/// averages gradients over each minibatch, and takes one Adam step per
/// batch. After every epoch the validation loss is computed with
/// dropout off; when it fails to strictly improve `patience` epochs in
/// a row, training stops and the weights from the best epoch are
/// restored. Identical seeds give bit-identical loss curves and final
/// parameters.
pub fn fit<T: Real>(
    params: &mut ModelParams<T>,
    model_cfg: &ModelConfig,
    train: &[Window],
    val: &[Window],
    loss_cfg: &LossConfig,
    optim_cfg: &OptimConfig,
    seed: u64,
) -> Result<TrainReport> {
    let start = Instant::now();
    model_cfg.validate()?;
    loss_cfg.validate()?;
    optim_cfg.validate()?;
    if train.is_empty() {
        return Err(PamError::Config("training split is empty".into()));
    }
    if val.is_empty() {
        return Err(PamError::Config("validation split is empty".into()));
    }

    let train: Vec<CastWindow<T>> = cast_windows(train);
    let val: Vec<CastWindow<T>> = cast_windows(val);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = AdamState::new(params.items());
    let mut stopper = EarlyStopper::new(optim_cfg.patience);
    let mut best_weights: Vec<Tensor<T>> =
        params.items().iter().map(|p| p.value.clone()).collect();

    let mut train_losses = Vec::new();
    let mut val_losses = Vec::new();
    let mut stopped_early = false;
    params.zero_grads();

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..optim_cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(optim_cfg.batch_size) {
            let scale = T::from_f64(1.0 / batch.len() as f64);
            for &idx in batch {
                let (x, y, tau_end) = &train[idx];
                let mut tape = Tape::new();
                let (pred, _) =
                    forward(&mut tape, params, model_cfg, x, *tau_end, true, &mut rng)?;
                let loss = loss_node(&mut tape, pred, y, loss_cfg)?;
                epoch_loss += tape.scalar_value(loss).to_f64();
                tape.backward_seeded(loss, scale)?;
                tape.accumulate_param_grads(params.items_mut());
            }
            adam_step(params.items_mut(), &mut state, optim_cfg)?;
        }
        train_losses.push(epoch_loss / train.len() as f64);

        let val_loss = eval_loss_cast(params, model_cfg, &val, loss_cfg)?;
        val_losses.push(val_loss);

        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            for (w, p) in best_weights.iter_mut().zip(params.items()) {
                w.clone_from(&p.value);
            }
        }
        if stop {
            stopped_early = true;
            break;
        }
    }

    for (p, w) in params.items_mut().iter_mut().zip(best_weights) {
        p.value = w;
    }
    params.zero_grads();

    Ok(TrainReport {
        train_losses,
        val_losses,
        best_epoch: stopper.best_epoch,
        stopped_early,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
