//! Trainable zoom transform.
//!
//! The model keeps the diagonal `A` of a [`CztPlan`] fixed and learns the
//! `M x N` blocks `W_Re` and `W_Im`, stored side by side as a single `M x 2N`
//! matrix `w_tilde`. The forward pass evaluates the real block product
//!
//! ```text
//! [X_Re]   [W_Re  -W_Im] [Ax_Re]
//! [X_Im] = [W_Im   W_Re] [Ax_Im]
//! ```
//!
//! where each learned block appears twice, then takes the per-bin modulus
//! and a softmax over bins. At initialization `w_tilde` equals the classical
//! CZT blocks, so the model starts out as a plain CZT argmax estimator.

mod checkpoint;
mod grad;
mod loss;
mod optim;
mod train;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::czt::CztPlan;
use crate::error::{Error, Result};
use crate::hr::{HrEstimate, HrMethod};
use crate::signal::{argmax, SignalWindow};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use grad::{backward, backward_batch};
pub use loss::{
    combined_loss, cross_entropy_loss, emd_loss, emd_loss_batch, smo_loss, target_distribution,
    TrainConfig, CROSS_ENTROPY_FLOOR,
};
pub use optim::{AdamW, PlateauScheduler, SchedulerConfig};
pub use train::{train, train_with_validation, EpochStats, TrainReport};

/// Bounds of the HardTanh projection applied to `w_tilde`.
pub const CLAMP: (f64, f64) = (-1.0, 1.0);

/// Probability distribution over the plan's frequency bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrDistribution {
    probs: Vec<f64>,
    freqs_hz: Vec<f64>,
}

impl HrDistribution {
    pub fn new(probs: Vec<f64>, freqs_hz: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.len() != freqs_hz.len() {
            return Err(Error::GridMismatch);
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::NonFinite("distribution probabilities".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs, freqs_hz })
    }

    /// One-hot distribution at `bin`.
    pub fn one_hot(bin: usize, freqs_hz: Vec<f64>) -> Result<Self> {
        let mut probs = vec![0.0; freqs_hz.len()];
        *probs
            .get_mut(bin)
            .ok_or_else(|| Error::Config(format!("bin {bin} outside grid")))? = 1.0;
        Self::new(probs, freqs_hz)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn freqs_hz(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub(crate) fn same_grid(&self, other: &HrDistribution) -> bool {
        self.freqs_hz.len() == other.freqs_hz.len()
            && self
                .freqs_hz
                .iter()
                .zip(&other.freqs_hz)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }
}

/// Most probable bin, converted to BPM.
pub fn hr_from_distribution(dist: &HrDistribution) -> HrEstimate {
    let k = dist.argmax();
    HrEstimate {
        bpm: 60.0 * dist.freqs_hz[k],
        method: HrMethod::DeepCzt,
        confidence: Some(dist.probs[k].clamp(0.0, 1.0)),
    }
}

/// Intermediate values of one forward evaluation, kept for backprop.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub ax_re: Vec<f64>,
    pub ax_im: Vec<f64>,
    pub x_re: Vec<f64>,
    pub x_im: Vec<f64>,
    pub modulus: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Constrained, trainable CZT estimator.
#[derive(Debug, Clone)]
pub struct DeepCztModel {
    plan: Arc<CztPlan>,
    w_tilde: Vec<f64>,
    w_tilde_init: Arc<[f64]>,
}

impl DeepCztModel {
    /// Model initialized to the classical transform of `plan`.
    pub fn from_plan(plan: Arc<CztPlan>) -> Self {
        let (m, n) = (plan.m_bins(), plan.n_input());
        let mut w = Vec::with_capacity(m * 2 * n);
        for i in 0..m {
            w.extend_from_slice(&plan.w_re()[i * n..(i + 1) * n]);
            w.extend_from_slice(&plan.w_im()[i * n..(i + 1) * n]);
        }
        Self {
            plan,
            w_tilde_init: w.clone().into(),
            w_tilde: w,
        }
    }

    /// Default heart-rate model: band [0.66, 3.0] Hz, `M = N`.
    pub fn heart_rate(n_input: usize, sample_rate_hz: f64) -> Result<Self> {
        Ok(Self::from_plan(Arc::new(CztPlan::heart_rate(
            n_input,
            sample_rate_hz,
        )?)))
    }

    pub(crate) fn from_parts(plan: Arc<CztPlan>, w_tilde: Vec<f64>, w_tilde_init: Vec<f64>) -> Self {
        Self {
            plan,
            w_tilde,
            w_tilde_init: w_tilde_init.into(),
        }
    }

    pub fn plan(&self) -> &CztPlan {
        &self.plan
    }

    pub fn shared_plan(&self) -> Arc<CztPlan> {
        Arc::clone(&self.plan)
    }

    pub fn m_bins(&self) -> usize {
        self.plan.m_bins()
    }

    pub fn n_input(&self) -> usize {
        self.plan.n_input()
    }

    /// Row-major `M x 2N` learnable weights: `[W_Re | W_Im]` per row.
    pub fn w_tilde(&self) -> &[f64] {
        &self.w_tilde
    }

    /// Frozen copy of the classical initialization.
    pub fn w_tilde_init(&self) -> &[f64] {
        &self.w_tilde_init
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.w_tilde[row * 2 * self.n_input() + col]
    }

    /// Sets one weight, clamped to [`CLAMP`].
    pub fn set_weight(&mut self, row: usize, col: usize, value: f64) {
        let idx = row * 2 * self.n_input() + col;
        self.w_tilde[idx] = value.clamp(CLAMP.0, CLAMP.1);
    }

    /// Applies `update` to the raw weights and re-projects onto [`CLAMP`].
    pub fn update_weights(&mut self, update: impl FnOnce(&mut [f64])) {
        update(&mut self.w_tilde);
        self.project();
    }

    fn project(&mut self) {
        for w in &mut self.w_tilde {
            *w = w.clamp(CLAMP.0, CLAMP.1);
        }
    }

    /// Errors unless the model accepts `len`-sample windows.
    pub fn check_input_len(&self, len: usize) -> Result<()> {
        if len != self.n_input() {
            return Err(Error::DimensionMismatch {
                expected: self.n_input(),
                expected_bins: self.m_bins(),
                got: len,
            });
        }
        Ok(())
    }

    /// Full `2M x 2N` real matrix with the tied blocks expanded.
    pub fn effective_matrix(&self) -> Vec<f64> {
        let (m, n) = (self.m_bins(), self.n_input());
        let mut out = vec![0.0; 4 * m * n];
        let cols = 2 * n;
        for i in 0..m {
            for j in 0..n {
                let re = self.weight(i, j);
                let im = self.weight(i, n + j);
                out[i * cols + j] = re;
                out[i * cols + n + j] = -im;
                out[(m + i) * cols + j] = im;
                out[(m + i) * cols + n + j] = re;
            }
        }
        out
    }

    /// Forward pass on raw samples, keeping intermediates.
    pub fn forward_pass(&self, x: &[f64]) -> Result<ForwardPass> {
        self.check_input_len(x.len())?;
        let n = self.n_input();
        let plan = &self.plan;
        let ax_re: Vec<f64> = x.iter().zip(plan.a_re()).map(|(x, a)| x * a).collect();
        let ax_im: Vec<f64> = x.iter().zip(plan.a_im()).map(|(x, a)| x * a).collect();

        let (x_re, x_im): (Vec<f64>, Vec<f64>) = self
            .w_tilde
            .chunks_exact(2 * n)
            .map(|row| {
                let (wr, wi) = row.split_at(n);
                let mut re = 0.0;
                let mut im = 0.0;
                for j in 0..n {
                    re += wr[j] * ax_re[j] - wi[j] * ax_im[j];
                    im += wi[j] * ax_re[j] + wr[j] * ax_im[j];
                }
                (re, im)
            })
            .unzip();
        let modulus: Vec<f64> = x_re
            .iter()
            .zip(&x_im)
            .map(|(r, i)| r.hypot(*i))
            .collect();
        let probs = softmax(&modulus);
        if probs.iter().any(|p| !p.is_finite()) {
            let worst = modulus.iter().cloned().fold(f64::NAN, f64::max);
            return Err(Error::NonFinite(format!(
                "model output (max modulus {worst}); weights may have exploded"
            )));
        }
        Ok(ForwardPass {
            ax_re,
            ax_im,
            x_re,
            x_im,
            modulus,
            probs,
        })
    }

    /// Bin distribution of `window`, used exactly as given.
    pub fn forward(&self, window: &SignalWindow) -> Result<HrDistribution> {
        self.check_input_len(window.len())?;
        self.plan.check_window(window)?;
        let pass = self.forward_pass(window.samples())?;
        Ok(HrDistribution {
            probs: pass.probs,
            freqs_hz: self.plan.bin_freqs_hz(),
        })
    }

    /// Bin distribution after centering and scaling `window` to unit norm.
    ///
    /// This is the preprocessing used for training and inference; without it
    /// the softmax of raw magnitudes saturates to one-hot for typical
    /// amplitudes and gradients vanish.
    pub fn predict(&self, window: &SignalWindow) -> Result<HrDistribution> {
        self.forward(&window.normalized())
    }
}

pub(crate) fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
