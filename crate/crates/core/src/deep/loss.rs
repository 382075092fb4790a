use serde::{Deserialize, Serialize};

use super::optim::SchedulerConfig;
use super::{DeepCztModel, HrDistribution};
use crate::czt::CztPlan;
use crate::error::{Error, Result};

/// Probability floor callers apply before [`cross_entropy_loss`].
pub const CROSS_ENTROPY_FLOOR: f64 = 1e-12;

/// Hyperparameters of the combined objective and its optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the EMD term.
    pub alpha: f64,
    /// Weight of the SMO term.
    pub beta: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub scheduler: SchedulerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Std (BPM) of the Gaussian target; 0 gives one-hot targets.
    pub target_smoothing_bpm: f64,
    /// Fraction held out for validation when no split is supplied.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 100.0,
            beta: 0.01,
            learning_rate: 1e-4,
            weight_decay: 0.0,
            scheduler: SchedulerConfig::default(),
            batch_size: 16,
            epochs: 50,
            target_smoothing_bpm: 0.0,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.alpha >= 0.0 && self.beta >= 0.0) || !(self.alpha + self.beta > 0.0) {
            return bad("alpha and beta must be nonnegative and not both zero");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be nonnegative");
        }
        if !(self.scheduler.factor > 0.0 && self.scheduler.factor < 1.0) {
            return bad("scheduler factor must lie in (0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.target_smoothing_bpm >= 0.0) {
            return bad("target_smoothing_bpm must be nonnegative");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        Ok(())
    }

    /// True when the SMO term is switched off.
    pub fn is_unregularized(&self) -> bool {
        self.beta == 0.0
    }
}

/// Squared-CDF earth mover's distance, averaged over bins.
pub fn emd_loss(pred: &HrDistribution, target: &HrDistribution) -> Result<f64> {
    if !pred.same_grid(target) {
        return Err(Error::GridMismatch);
    }
    Ok(emd_from_probs(pred.probs(), target.probs()))
}

pub(crate) fn emd_from_probs(pred: &[f64], target: &[f64]) -> f64 {
    let mut cdf = 0.0;
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(target) {
        cdf += p - t;
        sum += cdf * cdf;
    }
    sum / pred.len() as f64
}

/// Mean of [`emd_loss`] over a batch of `(pred, target)` pairs.
pub fn emd_loss_batch(pairs: &[(HrDistribution, HrDistribution)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (p, t) in pairs {
        total += emd_loss(p, t)?;
    }
    Ok(total / pairs.len() as f64)
}

/// `-ln p[target_bin]`; blind to how far the mass sits from the target.
pub fn cross_entropy_loss(pred: &HrDistribution, target_bin: usize) -> Result<f64> {
    let p = *pred
        .probs()
        .get(target_bin)
        .ok_or_else(|| Error::Config(format!("target bin {target_bin} outside grid")))?;
    if p <= 0.0 {
        return Err(Error::ZeroProbability { bin: target_bin });
    }
    Ok(-p.ln())
}

/// Mean absolute deviation of `w_tilde` from its initialization.
pub fn smo_loss(model: &DeepCztModel) -> f64 {
    let w = model.w_tilde();
    let init = model.w_tilde_init();
    w.iter().zip(init).map(|(a, b)| (a - b).abs()).sum::<f64>() / w.len() as f64
}

/// `alpha * EMD(pred, target) + beta * SMO(model)`.
pub fn combined_loss(
    model: &DeepCztModel,
    pred: &HrDistribution,
    target: &HrDistribution,
    config: &TrainConfig,
) -> Result<f64> {
    Ok(config.alpha * emd_loss(pred, target)? + config.beta * smo_loss(model))
}

/// Ground-truth distribution over the plan's bins.
///
/// Heart rates outside the band are clamped to the nearest edge with a
/// warning. With `smoothing_bpm == 0` the result is one-hot at the nearest
/// bin; otherwise a discretized Gaussian with that std in BPM.
pub fn target_distribution(hr_bpm: f64, plan: &CztPlan, smoothing_bpm: f64) -> HrDistribution {
    let lo = 60.0 * plan.f_start_hz();
    let hi = 60.0 * plan.f_end_hz();
    let hr = if hr_bpm < lo || hr_bpm > hi || !hr_bpm.is_finite() {
        let clamped = if hr_bpm.is_nan() { lo } else { hr_bpm.clamp(lo, hi) };
        log::warn!("target HR {hr_bpm} BPM outside [{lo}, {hi}]; clamped to {clamped}");
        clamped
    } else {
        hr_bpm
    };
    let freqs = plan.bin_freqs_hz();
    let mut probs = vec![0.0; freqs.len()];
    if smoothing_bpm > 0.0 {
        for (p, f) in probs.iter_mut().zip(&freqs) {
            let z = (60.0 * f - hr) / smoothing_bpm;
            *p = (-0.5 * z * z).exp();
        }
        let total: f64 = probs.iter().sum();
        if total > 0.0 {
            probs.iter_mut().for_each(|p| *p /= total);
            return HrDistribution { probs, freqs_hz: freqs };
        }
        probs.iter_mut().for_each(|p| *p = 0.0);
    }
    probs[plan.nearest_bin(hr / 60.0)] = 1.0;
    HrDistribution {
        probs,
        freqs_hz: freqs,
    }
}
