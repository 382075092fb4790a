//! Analytic gradient of the combined loss with respect to `w_tilde`.
//!
//! Chain: EMD -> softmax -> modulus -> tied real blocks. Each of `W_Re` and
//! `W_Im` appears in two blocks of the expanded matrix, so its gradient is the
//! sum of both contributions:
//!
//! ```text
//! dL/dW_Re[k][n] =  gRe[k] * AxRe[n] + gIm[k] * AxIm[n]
//! dL/dW_Im[k][n] = -gRe[k] * AxIm[n] + gIm[k] * AxRe[n]
//! ```
//!
//! The modulus has subgradient 0 at 0, and so does `|.|` in the SMO term.

use rayon::prelude::*;

use super::loss::TrainConfig;
use super::{DeepCztModel, HrDistribution};
use crate::error::{Error, Result};
use crate::signal::SignalWindow;

/// Per-sample factors of the rank-2 EMD gradient.
pub(crate) struct SampleGrad {
    pub g_re: Vec<f64>,
    pub g_im: Vec<f64>,
    pub ax_re: Vec<f64>,
    pub ax_im: Vec<f64>,
    pub emd: f64,
}

/// Gradient of the per-sample EMD with respect to the bin outputs.
pub(crate) fn sample_grad(model: &DeepCztModel, x: &[f64], target: &[f64]) -> Result<SampleGrad> {
    let pass = model.forward_pass(x)?;
    let m = pass.probs.len();
    let p = &pass.probs;

    // dE/dp_j = (2/M) sum_{k>=j} C_k
    let mut cdf = Vec::with_capacity(m);
    let mut c = 0.0;
    for (pi, ti) in p.iter().zip(target) {
        c += pi - ti;
        cdf.push(c);
    }
    let emd = cdf.iter().map(|c| c * c).sum::<f64>() / m as f64;
    let mut g_p = vec![0.0; m];
    let mut suffix = 0.0;
    for j in (0..m).rev() {
        suffix += cdf[j];
        g_p[j] = 2.0 * suffix / m as f64;
    }

    // softmax
    let dot: f64 = p.iter().zip(&g_p).map(|(a, b)| a * b).sum();
    let g_mod: Vec<f64> = p.iter().zip(&g_p).map(|(pi, gi)| pi * (gi - dot)).collect();

    // modulus
    let mut g_re = vec![0.0; m];
    let mut g_im = vec![0.0; m];
    for k in 0..m {
        let r = pass.modulus[k];
        if r > 0.0 {
            g_re[k] = g_mod[k] * pass.x_re[k] / r;
            g_im[k] = g_mod[k] * pass.x_im[k] / r;
        }
    }
    Ok(SampleGrad {
        g_re,
        g_im,
        ax_re: pass.ax_re,
        ax_im: pass.ax_im,
        emd,
    })
}

/// Accumulates `alpha * mean(EMD grads) + beta * SMO subgradient` into a new
/// `M x 2N` matrix. Rows are processed in parallel; within a row the samples
/// are summed in order, so the result is deterministic.
pub(crate) fn assemble(model: &DeepCztModel, samples: &[SampleGrad], config: &TrainConfig) -> Vec<f64> {
    let n = model.n_input();
    let scale = config.alpha / samples.len().max(1) as f64;
    let smo_scale = config.beta / model.w_tilde().len() as f64;
    let mut grad = vec![0.0; model.w_tilde().len()];
    grad.par_chunks_mut(2 * n)
        .zip(model.w_tilde().par_chunks(2 * n))
        .zip(model.w_tilde_init().par_chunks(2 * n))
        .enumerate()
        .for_each(|(k, ((row, w), w0))| {
            let (d_re, d_im) = row.split_at_mut(n);
            for s in samples {
                let gr = s.g_re[k] * scale;
                let gi = s.g_im[k] * scale;
                if gr == 0.0 && gi == 0.0 {
                    continue;
                }
                for j in 0..n {
                    d_re[j] += gr * s.ax_re[j] + gi * s.ax_im[j];
                    d_im[j] += -gr * s.ax_im[j] + gi * s.ax_re[j];
                }
            }
            if smo_scale != 0.0 {
                for ((g, a), b) in row.iter_mut().zip(w).zip(w0) {
                    let d = a - b;
                    if d > 0.0 {
                        *g += smo_scale;
                    } else if d < 0.0 {
                        *g -= smo_scale;
                    }
                }
            }
        });
    grad
}

fn check_finite(grad: &[f64]) -> Result<()> {
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i}")));
    }
    Ok(())
}

/// Gradient of `alpha * EMD(forward(window), target) + beta * SMO` with
/// respect to `w_tilde`, row-major `M x 2N`.
pub fn backward(
    model: &DeepCztModel,
    window: &SignalWindow,
    target: &HrDistribution,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    backward_batch(model, &[(window.clone(), target.clone())], config)
}

/// Batch gradient: EMD averaged over the batch, plus the SMO term once.
pub fn backward_batch(
    model: &DeepCztModel,
    batch: &[(SignalWindow, HrDistribution)],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let freqs = model.plan().bin_freqs_hz();
    let samples = batch
        .iter()
        .map(|(w, t)| {
            model.plan().check_window(w)?;
            if t.freqs_hz().len() != freqs.len() {
                return Err(Error::GridMismatch);
            }
            sample_grad(model, w.samples(), t.probs())
        })
        .collect::<Result<Vec<_>>>()?;
    let grad = assemble(model, &samples, config);
    check_finite(&grad)?;
    Ok(grad)
}
