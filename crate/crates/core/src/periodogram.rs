//! FFT periodogram baseline on the uniform DFT grid.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::{SignalWindow, Spectrum};

/// How the periodogram is formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PeriodogramOptions {
    /// FFT length; must be at least the (segment) length when set.
    pub zero_pad_to: Option<usize>,
    /// Average Hann-windowed half-length segments with 50% overlap instead of
    /// taking a single rectangular-window periodogram.
    pub welch: bool,
}

/// Power spectrum of the centered window, masked to `band` (inclusive, Hz).
pub fn fft_periodogram(
    window: &SignalWindow,
    band: (f64, f64),
    options: PeriodogramOptions,
) -> Result<Spectrum> {
    let (lo, hi) = band;
    let fs = window.sample_rate_hz();
    if !(lo > 0.0 && lo < hi && hi <= window.nyquist_hz()) {
        return Err(Error::Config(format!(
            "band [{lo}, {hi}] must satisfy 0 < lo < hi <= {}",
            window.nyquist_hz()
        )));
    }
    let x = window.centered();
    let (power, nfft) = if options.welch {
        welch(x.samples(), options.zero_pad_to)?
    } else {
        let nfft = fft_len(x.len(), options.zero_pad_to)?;
        let scale = 1.0 / x.len() as f64;
        (power_spectrum(x.samples(), nfft, scale), nfft)
    };

    let (freqs, values): (Vec<f64>, Vec<f64>) = power
        .into_iter()
        .enumerate()
        .map(|(k, p)| (k as f64 * fs / nfft as f64, p))
        .filter(|(f, _)| *f >= lo && *f <= hi)
        .unzip();
    if freqs.is_empty() {
        return Err(Error::EmptyBand { lo, hi });
    }
    Spectrum::new(freqs, values, false)
}

fn fft_len(len: usize, zero_pad_to: Option<usize>) -> Result<usize> {
    match zero_pad_to {
        Some(n) if n < len => Err(Error::Config(format!(
            "zero_pad_to ({n}) is shorter than the segment ({len})"
        ))),
        Some(n) => Ok(n),
        None => Ok(len),
    }
}

/// One-sided `|X_k|^2 * scale` for `k = 0..=nfft/2`.
fn power_spectrum(x: &[f64], nfft: usize, scale: f64) -> Vec<f64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for (b, &v) in buf.iter_mut().zip(x) {
        b.re = v;
    }
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    buf.iter()
        .take(nfft / 2 + 1)
        .map(|z| z.norm_sqr() * scale)
        .collect()
}

fn welch(x: &[f64], zero_pad_to: Option<usize>) -> Result<(Vec<f64>, usize)> {
    let seg = x.len() / 2;
    if seg < 2 {
        return Err(Error::InvalidWindow(
            "window too short for Welch segments".into(),
        ));
    }
    let step = (seg / 2).max(1);
    let nfft = fft_len(seg, zero_pad_to)?;
    // Periodic Hann.
    let taper: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (TAU * i as f64 / seg as f64).cos())
        .collect();
    let scale = 1.0 / taper.iter().map(|w| w * w).sum::<f64>();

    let mut acc = vec![0.0; nfft / 2 + 1];
    let mut count = 0usize;
    let mut start = 0;
    while start + seg <= x.len() {
        let chunk = &x[start..start + seg];
        let mean = chunk.iter().sum::<f64>() / seg as f64;
        let tapered: Vec<f64> = chunk
            .iter()
            .zip(&taper)
            .map(|(v, w)| (v - mean) * w)
            .collect();
        for (a, p) in acc.iter_mut().zip(power_spectrum(&tapered, nfft, scale)) {
            *a += p;
        }
        count += 1;
        start += step;
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    Ok((acc, nfft))
}
