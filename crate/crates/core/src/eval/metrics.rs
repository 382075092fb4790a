use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregate agreement between predicted and reference heart rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub mae: f64,
    /// Standard deviation of the absolute errors.
    pub mae_sd: f64,
    pub rmse: f64,
    /// Percent.
    pub mape: f64,
    pub mape_sd: f64,
    /// Absent when either series has zero variance.
    pub pearson_r: Option<f64>,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn metrics(preds: &[f64], gts: &[f64]) -> Result<Metrics> {
    if preds.len() != gts.len() {
        return Err(Error::Metrics(format!(
            "{} predictions for {} references",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Metrics("no samples".into()));
    }
    if let Some(g) = gts.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::Metrics(format!("reference {g} must be positive")));
    }
    if preds.iter().chain(gts).any(|v| !v.is_finite()) {
        return Err(Error::Metrics("non-finite input".into()));
    }
    let n = preds.len();
    let abs_err = preds.iter().zip(gts).map(|(p, g)| (p - g).abs());
    let (mae, mae_sd) = mean_sd(abs_err.clone());
    let rmse = (abs_err.clone().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
    let (mape, mape_sd) = mean_sd(preds.iter().zip(gts).map(|(p, g)| 100.0 * (p - g).abs() / g));

    let mp = preds.iter().sum::<f64>() / n as f64;
    let mg = gts.iter().sum::<f64>() / n as f64;
    let (mut cov, mut vp, mut vg) = (0.0, 0.0, 0.0);
    for (p, g) in preds.iter().zip(gts) {
        cov += (p - mp) * (g - mg);
        vp += (p - mp) * (p - mp);
        vg += (g - mg) * (g - mg);
    }
    let pearson_r = (vp > 0.0 && vg > 0.0).then(|| (cov / (vp.sqrt() * vg.sqrt())).clamp(-1.0, 1.0));

    Ok(Metrics {
        n,
        mae,
        mae_sd,
        // guard the rmse >= mae ordering against last-ulp rounding
        rmse: rmse.max(mae),
        mape,
        mape_sd,
        pearson_r,
    })
}
