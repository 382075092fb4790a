use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grad::{assemble, sample_grad};
use super::loss::{emd_from_probs, smo_loss, target_distribution, TrainConfig};
use super::optim::{AdamW, PlateauScheduler};
use super::DeepCztModel;
use crate::error::{Error, Result};
use crate::signal::{argmax, SignalWindow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mae_bpm: f64,
    pub smo: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Validation MAE of the model as passed in (the classical CZT for a
    /// fresh model).
    pub initial_val_mae_bpm: f64,
    pub final_val_mae_bpm: f64,
    pub final_smo: f64,
    pub steps: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub unregularized: bool,
}

/// Decorrelates the split shuffle from the batch shuffle.
const SPLIT_SALT: u64 = 0x5eed_5911;

struct Prepared {
    samples: Vec<f64>,
    target: Vec<f64>,
    label_bpm: f64,
}

fn prepare(
    model: &DeepCztModel,
    data: &[(SignalWindow, f64)],
    config: &TrainConfig,
) -> Result<Vec<Prepared>> {
    data.iter()
        .map(|(w, bpm)| {
            model.check_input_len(w.len())?;
            model.plan().check_window(w)?;
            let target = target_distribution(*bpm, model.plan(), config.target_smoothing_bpm);
            Ok(Prepared {
                samples: w.normalized().samples().to_vec(),
                target: target.probs().to_vec(),
                label_bpm: *bpm,
            })
        })
        .collect()
}

/// Mean EMD and mean absolute HR error over `data`.
fn evaluate(model: &DeepCztModel, data: &[Prepared]) -> Result<(f64, f64)> {
    let freqs = model.plan().bin_freqs_hz();
    let per_sample = data
        .par_iter()
        .map(|s| {
            let pass = model.forward_pass(&s.samples)?;
            let emd = emd_from_probs(&pass.probs, &s.target);
            let bpm = 60.0 * freqs[argmax(&pass.probs)];
            Ok((emd, (bpm - s.label_bpm).abs()))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_sample.len() as f64;
    let (emd, err) = per_sample
        .iter()
        .fold((0.0, 0.0), |(a, b), (e, d)| (a + e, b + d));
    Ok((emd / n, err / n))
}

/// Trains on a seeded split of `dataset` (`val_fraction` held out).
pub fn train(
    model: &mut DeepCztModel,
    dataset: &[(SignalWindow, f64)],
    config: &TrainConfig,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.validate()?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ SPLIT_SALT));
    let n_val = ((dataset.len() as f64 * config.val_fraction).round() as usize)
        .clamp(1, dataset.len().saturating_sub(1).max(1));
    let (val_idx, train_idx) = order.split_at(n_val);
    let pick = |idx: &[usize]| -> Vec<(SignalWindow, f64)> {
        idx.iter().map(|&i| dataset[i].clone()).collect()
    };
    let val = pick(val_idx);
    // a single sample serves as both splits
    let train_set = if train_idx.is_empty() { val.clone() } else { pick(train_idx) };
    train_with_validation(model, &train_set, &val, config)
}

/// Mini-batch AdamW on `alpha * EMD + beta * SMO`, projecting `w_tilde` onto
/// `[-1, 1]` after every step and decaying the learning rate on validation
/// plateaus.
pub fn train_with_validation(
    model: &mut DeepCztModel,
    train_set: &[(SignalWindow, f64)],
    val_set: &[(SignalWindow, f64)],
    config: &TrainConfig,
) -> Result<TrainReport> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.validate()?;
    let train_data = prepare(model, train_set, config)?;
    let val_data = prepare(model, val_set, config)?;

    let (_, initial_mae) = evaluate(model, &val_data)?;
    let mut optimizer = AdamW::new(model.w_tilde().len(), config.learning_rate, config.weight_decay);
    let mut scheduler = PlateauScheduler::new(config.scheduler);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut final_mae = initial_mae;
    let mut steps = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            let grads = batch
                .par_iter()
                .map(|&i| sample_grad(model, &train_data[i].samples, &train_data[i].target))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Diverged {
                    epoch,
                    reason: e.to_string(),
                })?;
            let emd = grads.iter().map(|g| g.emd).sum::<f64>() / grads.len() as f64;
            loss_sum += config.alpha * emd + config.beta * smo_loss(model);
            batches += 1;

            let grad = assemble(model, &grads, config);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    reason: "non-finite gradient".into(),
                });
            }
            model.update_weights(|w| optimizer.step(w, &grad));
            steps += 1;
        }

        let (val_emd, val_mae) = evaluate(model, &val_data).map_err(|e| Error::Diverged {
            epoch,
            reason: e.to_string(),
        })?;
        let smo = smo_loss(model);
        let val_loss = config.alpha * val_emd + config.beta * smo;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: format!("validation loss is {val_loss}"),
            });
        }
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            val_loss,
            val_mae_bpm: val_mae,
            smo,
            learning_rate: optimizer.learning_rate,
        };
        log::info!(
            "epoch {epoch}: train {:.5} val {:.5} mae {:.3} smo {:.2e} lr {:.2e}",
            stats.train_loss,
            stats.val_loss,
            stats.val_mae_bpm,
            stats.smo,
            stats.learning_rate
        );
        epochs.push(stats);
        final_mae = val_mae;
        optimizer.learning_rate = scheduler.step(val_loss, optimizer.learning_rate);
    }

    Ok(TrainReport {
        epochs,
        initial_val_mae_bpm: initial_mae,
        final_val_mae_bpm: final_mae,
        final_smo: smo_loss(model),
        steps,
        n_train: train_data.len(),
        n_val: val_data.len(),
        alpha: config.alpha,
        beta: config.beta,
        seed: config.seed,
        unregularized: config.is_unregularized(),
    })
}
