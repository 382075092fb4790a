//! Signal and spectrum carriers shared by every estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled, finite, real-valued signal segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalWindow {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl SignalWindow {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidWindow(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidWindow(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidWindow(format!(
                "sample {i} is not finite ({})",
                samples[i]
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz / 2.0
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Copy of the window with its mean subtracted.
    ///
    /// All spectral estimators run on centered windows so the DC term does not
    /// leak into the low edge of the heart-rate band.
    pub fn centered(&self) -> SignalWindow {
        let mean = self.mean();
        SignalWindow {
            samples: self.samples.iter().map(|x| x - mean).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Centered copy scaled to unit Euclidean norm. An all-constant window
    /// stays all-zero.
    pub fn normalized(&self) -> SignalWindow {
        let mut out = self.centered();
        let norm = out.samples.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.samples.iter_mut().for_each(|x| *x /= norm);
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Result<SignalWindow> {
        SignalWindow::new(
            self.samples.iter().map(|x| x * factor).collect(),
            self.sample_rate_hz,
        )
    }

    /// Sub-window `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Result<SignalWindow> {
        if start + len > self.samples.len() {
            return Err(Error::WindowTooLarge {
                size: start + len,
                len: self.samples.len(),
            });
        }
        SignalWindow::new(self.samples[start..start + len].to_vec(), self.sample_rate_hz)
    }
}

/// Frequencies (Hz) paired with nonnegative values over an analysis band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    freqs_hz: Vec<f64>,
    values: Vec<f64>,
    normalized: bool,
}

impl Spectrum {
    pub fn new(freqs_hz: Vec<f64>, values: Vec<f64>, normalized: bool) -> Result<Self> {
        if freqs_hz.is_empty() || freqs_hz.len() != values.len() {
            return Err(Error::InvalidWindow(format!(
                "spectrum needs matching nonempty grids ({} freqs, {} values)",
                freqs_hz.len(),
                values.len()
            )));
        }
        if freqs_hz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidWindow(
                "spectrum frequencies must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::NonFinite("spectrum values".into()));
        }
        if normalized {
            let total: f64 = values.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidWindow(format!(
                    "normalized spectrum sums to {total}"
                )));
            }
        }
        Ok(Self {
            freqs_hz,
            values,
            normalized,
        })
    }

    pub fn freqs_hz(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the largest value; the lowest index wins exact ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }

    pub fn peak_freq_hz(&self) -> f64 {
        self.freqs_hz[self.argmax()]
    }
}

/// First index of the maximum. NaN entries are never selected.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}
