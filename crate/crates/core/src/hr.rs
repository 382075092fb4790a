//! Heart-rate estimators: temporal peak detection, FFT argmax, CZT argmax
//! and the trained deep CZT.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::czt::{czt_matrix, CztPlan, HR_BAND_HIGH_HZ, HR_BAND_LOW_HZ};
use crate::deep::{hr_from_distribution, DeepCztModel};
use crate::error::{Error, Result};
use crate::periodogram::{fft_periodogram, PeriodogramOptions};
use crate::signal::{SignalWindow, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HrMethod {
    #[serde(rename = "peak")]
    PeakIbi,
    #[serde(rename = "fft")]
    FftArgmax,
    #[serde(rename = "czt")]
    CztArgmax,
    #[serde(rename = "deep")]
    DeepCzt,
}

impl HrMethod {
    pub const ALL: [HrMethod; 4] = [
        HrMethod::PeakIbi,
        HrMethod::FftArgmax,
        HrMethod::CztArgmax,
        HrMethod::DeepCzt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HrMethod::PeakIbi => "peak",
            HrMethod::FftArgmax => "fft",
            HrMethod::CztArgmax => "czt",
            HrMethod::DeepCzt => "deep",
        }
    }

    pub fn is_spectral(self) -> bool {
        !matches!(self, HrMethod::PeakIbi)
    }
}

impl fmt::Display for HrMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HrMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "peak" | "peaks" | "ibi" => Ok(HrMethod::PeakIbi),
            "fft" => Ok(HrMethod::FftArgmax),
            "czt" => Ok(HrMethod::CztArgmax),
            "deep" | "deep-czt" => Ok(HrMethod::DeepCzt),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// A single heart-rate estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrEstimate {
    pub bpm: f64,
    pub method: HrMethod,
    /// Peak power fraction or softmax maximum, in `[0, 1]`.
    pub confidence: Option<f64>,
}

/// `60 * f` at the spectrum's maximum; lowest frequency wins ties.
pub fn hr_from_spectrum(spec: &Spectrum, method: HrMethod) -> Result<HrEstimate> {
    let total: f64 = spec.values().iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoSpectralEnergy);
    }
    let k = spec.argmax();
    Ok(HrEstimate {
        bpm: 60.0 * spec.freqs_hz()[k],
        method,
        confidence: Some((spec.values()[k] / total).clamp(0.0, 1.0)),
    })
}

/// Settings for the temporal peak detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    pub min_hr_bpm: f64,
    pub max_hr_bpm: f64,
    /// Minimum prominence as a fraction of the 10th-90th percentile range.
    pub prominence_frac: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            min_hr_bpm: 40.0,
            max_hr_bpm: 180.0,
            prominence_frac: 0.3,
        }
    }
}

impl PeakConfig {
    /// Refractory distance in samples, `floor(fs * 60 / max_hr)`.
    pub fn min_distance(&self, sample_rate_hz: f64) -> usize {
        ((sample_rate_hz * 60.0 / self.max_hr_bpm).floor() as usize).max(1)
    }

    /// Samples needed to hold two beats at the slowest allowed rate.
    pub fn recommended_len(&self, sample_rate_hz: f64) -> usize {
        (2.0 * sample_rate_hz * 60.0 / self.min_hr_bpm).ceil() as usize
    }
}

/// Heart rate from the mean inter-beat interval of detected pulse peaks.
pub fn hr_from_peaks(window: &SignalWindow, config: &PeakConfig) -> Result<HrEstimate> {
    if !(config.min_hr_bpm > 0.0 && config.max_hr_bpm > config.min_hr_bpm) {
        return Err(Error::Config(format!(
            "invalid HR range [{}, {}]",
            config.min_hr_bpm, config.max_hr_bpm
        )));
    }
    let x = window.samples();
    let fs = window.sample_rate_hz();
    if window.len() < config.recommended_len(fs) {
        log::debug!(
            "peak detection on {} samples; {} recommended for two beats at {} BPM",
            window.len(),
            config.recommended_len(fs),
            config.min_hr_bpm
        );
    }
    let spread = percentile(x, 0.9) - percentile(x, 0.1);
    let peaks = find_peaks(
        x,
        config.min_distance(fs),
        config.prominence_frac * spread,
    );
    if peaks.len() < 2 {
        return Err(Error::InsufficientPeaks { found: peaks.len() });
    }
    let first = peaks[0] as f64;
    let last = peaks[peaks.len() - 1] as f64;
    let mean_ibi_s = (last - first) / (peaks.len() - 1) as f64 / fs;
    Ok(HrEstimate {
        bpm: 60.0 / mean_ibi_s,
        method: HrMethod::PeakIbi,
        confidence: None,
    })
}

/// Linear-interpolated percentile, `q` in `[0, 1]`.
fn percentile(x: &[f64], q: f64) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Interior local maxima (plateaus resolve to their midpoint), thinned so no
/// two kept peaks are closer than `min_distance` samples (taller peaks take
/// precedence), then gated on topographic prominence.
pub fn find_peaks(x: &[f64], min_distance: usize, min_prominence: f64) -> Vec<usize> {
    let n = x.len();
    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                candidates.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }

    let mut keep = vec![true; candidates.len()];
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| x[candidates[b]].total_cmp(&x[candidates[a]]));
    for &c in &order {
        if !keep[c] {
            continue;
        }
        let p = candidates[c];
        for (other, kept) in candidates.iter().zip(keep.iter_mut()) {
            if *other != p && other.abs_diff(p) < min_distance {
                *kept = false;
            }
        }
    }

    candidates
        .into_iter()
        .zip(keep)
        .filter(|&(p, kept)| {
            let prom = prominence(x, p);
            kept && prom >= min_prominence && prom > 0.0
        })
        .map(|(p, _)| p)
        .collect()
}

fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    for &v in x[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Shared settings for all estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub band_hz: (f64, f64),
    pub peaks: PeakConfig,
    #[serde(skip)]
    pub periodogram: PeriodogramOptions,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            band_hz: (HR_BAND_LOW_HZ, HR_BAND_HIGH_HZ),
            peaks: PeakConfig::default(),
            periodogram: PeriodogramOptions::default(),
        }
    }
}

/// Runs any of the four estimators on windows of arbitrary length, caching
/// one CZT plan per `(length, sample rate)`.
pub struct Estimator<'m> {
    config: EstimatorConfig,
    model: Option<&'m DeepCztModel>,
    plans: RwLock<HashMap<(usize, u64), Arc<CztPlan>>>,
}

impl<'m> Estimator<'m> {
    pub fn new(config: EstimatorConfig) -> Self {
        Self {
            config,
            model: None,
            plans: RwLock::new(HashMap::new()),
        }
    }

    pub fn with_model(mut self, model: &'m DeepCztModel) -> Self {
        self.model = Some(model);
        self
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn model(&self) -> Option<&'m DeepCztModel> {
        self.model
    }

    /// Zoom plan with `M = N` over the configured band.
    pub fn plan_for(&self, n: usize, sample_rate_hz: f64) -> Result<Arc<CztPlan>> {
        let key = (n, sample_rate_hz.to_bits());
        if let Some(plan) = self.plans.read().expect("plan cache poisoned").get(&key) {
            return Ok(Arc::clone(plan));
        }
        let (lo, hi) = self.config.band_hz;
        let plan = Arc::new(CztPlan::new(n, n, lo, hi, sample_rate_hz)?);
        self.plans
            .write()
            .expect("plan cache poisoned")
            .insert(key, Arc::clone(&plan));
        Ok(plan)
    }

    /// CZT magnitude spectrum of the centered window.
    pub fn czt_spectrum(&self, window: &SignalWindow) -> Result<Spectrum> {
        let plan = self.plan_for(window.len(), window.sample_rate_hz())?;
        czt_matrix(&plan, &window.centered())
    }

    pub fn fft_spectrum(&self, window: &SignalWindow) -> Result<Spectrum> {
        fft_periodogram(window, self.config.band_hz, self.config.periodogram)
    }

    pub fn estimate(&self, method: HrMethod, window: &SignalWindow) -> Result<HrEstimate> {
        match method {
            HrMethod::PeakIbi => hr_from_peaks(window, &self.config.peaks),
            HrMethod::FftArgmax => hr_from_spectrum(&self.fft_spectrum(window)?, method),
            HrMethod::CztArgmax => hr_from_spectrum(&self.czt_spectrum(window)?, method),
            HrMethod::DeepCzt => {
                let model = self.model.ok_or_else(|| {
                    Error::Config("deep CZT estimation requires a model".into())
                })?;
                let dist = model.predict(window)?;
                Ok(hr_from_distribution(&dist))
            }
        }
    }
}

/// One row of a window-size sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub size: usize,
    pub chunk_index: usize,
    pub method: HrMethod,
    pub outcome: std::result::Result<HrEstimate, String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Sizes that could not be evaluated, with the reason.
    pub skipped_sizes: Vec<(usize, String)>,
}

impl SweepTable {
    pub fn rows_for(&self, size: usize, method: HrMethod) -> impl Iterator<Item = &SweepRow> {
        self.rows
            .iter()
            .filter(move |r| r.size == size && r.method == method)
    }
}

/// Estimates every method on every full non-overlapping chunk of each size.
/// Tail samples that do not fill a chunk are discarded.
pub fn sweep_windows(
    signal: &SignalWindow,
    sizes: &[usize],
    methods: &[HrMethod],
    estimator: &Estimator<'_>,
) -> SweepTable {
    let mut table = SweepTable::default();
    for &size in sizes {
        if size > signal.len() || size < 2 {
            let reason = Error::WindowTooLarge {
                size,
                len: signal.len(),
            }
            .to_string();
            log::warn!("sweep: skipping size {size}: {reason}");
            table.skipped_sizes.push((size, reason));
            continue;
        }
        for chunk_index in 0..signal.len() / size {
            let window = signal
                .slice(chunk_index * size, size)
                .expect("chunk lies inside the signal");
            for &method in methods {
                table.rows.push(SweepRow {
                    size,
                    chunk_index,
                    method,
                    outcome: estimator
                        .estimate(method, &window)
                        .map_err(|e| e.to_string()),
                });
            }
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn cosine(freq: f64, n: usize, fs: f64) -> SignalWindow {
        let x = (0..n).map(|i| (TAU * freq * i as f64 / fs).cos()).collect();
        SignalWindow::new(x, fs).unwrap()
    }

    #[test]
    fn spectrum_argmax_times_sixty() {
        let spec = Spectrum::new(vec![1.0, 1.5, 2.0], vec![0.1, 0.7, 0.2], false).unwrap();
        let est = hr_from_spectrum(&spec, HrMethod::CztArgmax).unwrap();
        assert_eq!(est.bpm, 90.0);
        assert!((est.confidence.unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn spectrum_tie_takes_lowest_frequency() {
        let spec = Spectrum::new(vec![1.0, 1.5, 2.0], vec![0.5, 0.0, 0.5], false).unwrap();
        assert_eq!(hr_from_spectrum(&spec, HrMethod::FftArgmax).unwrap().bpm, 60.0);
    }

    #[test]
    fn zero_spectrum_has_no_energy() {
        let spec = Spectrum::new(vec![1.0, 2.0], vec![0.0, 0.0], false).unwrap();
        assert!(matches!(
            hr_from_spectrum(&spec, HrMethod::CztArgmax),
            Err(Error::NoSpectralEnergy)
        ));
    }

    #[test]
    fn czt_and_fft_on_one_hertz() {
        let est = Estimator::new(EstimatorConfig::default());
        let w = cosine(1.0, 256, 30.0);
        let czt = est.estimate(HrMethod::CztArgmax, &w).unwrap();
        assert!((czt.bpm - 60.0).abs() <= 0.28, "{}", czt.bpm);
        let fft = est.estimate(HrMethod::FftArgmax, &w).unwrap();
        assert!((fft.bpm - 60.0).abs() <= 3.52, "{}", fft.bpm);
    }

    #[test]
    fn clean_sinusoid_peaks_every_period() {
        let w = cosine(1.0, 256, 30.0);
        let spread = percentile(w.samples(), 0.9) - percentile(w.samples(), 0.1);
        let peaks = find_peaks(w.samples(), 10, 0.3 * spread);
        assert_eq!(peaks, vec![30, 60, 90, 120, 150, 180, 210, 240]);
        let est = hr_from_peaks(&w, &PeakConfig::default()).unwrap();
        assert_eq!(est.bpm, 60.0);
        assert_eq!(est.method, HrMethod::PeakIbi);
    }

    #[test]
    fn constant_signal_has_no_peaks() {
        let w = SignalWindow::new(vec![0.5; 128], 30.0).unwrap();
        assert!(matches!(
            hr_from_peaks(&w, &PeakConfig::default()),
            Err(Error::InsufficientPeaks { found: 0 })
        ));
    }

    #[test]
    fn short_slow_window_lacks_peaks() {
        let w = cosine(0.66, 64, 30.0);
        assert!(matches!(
            hr_from_peaks(&w, &PeakConfig::default()),
            Err(Error::InsufficientPeaks { .. })
        ));
    }

    #[test]
    fn plateau_resolves_to_midpoint() {
        let x = [0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0];
        assert_eq!(find_peaks(&x, 1, 0.0), vec![3]);
    }

    #[test]
    fn refractory_distance_keeps_taller_peak() {
        let x = [0.0, 1.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0];
        assert_eq!(find_peaks(&x, 3, 0.0), vec![3, 8]);
        assert_eq!(find_peaks(&x, 1, 0.0), vec![1, 3, 8]);
    }

    #[test]
    fn edge_peaks_need_prominence() {
        // the bump at index 1 only rises 0.1 above the left edge
        let x = [0.9, 1.0, -1.0, 0.0, 2.0, -1.0, -1.0];
        assert_eq!(find_peaks(&x, 1, 0.5), vec![4]);
    }

    #[test]
    fn method_names_round_trip() {
        for m in HrMethod::ALL {
            assert_eq!(m.name().parse::<HrMethod>().unwrap(), m);
        }
        assert!("wavelet".parse::<HrMethod>().is_err());
    }

    #[test]
    fn deep_requires_model() {
        let est = Estimator::new(EstimatorConfig::default());
        assert!(matches!(
            est.estimate(HrMethod::DeepCzt, &cosine(1.0, 64, 30.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn sweep_counts_chunks() {
        let est = Estimator::new(EstimatorConfig::default());
        let w = cosine(1.2, 512, 30.0);
        let methods = [HrMethod::FftArgmax, HrMethod::CztArgmax];
        let table = sweep_windows(&w, &[64, 128, 256, 512], &methods, &est);
        for m in methods {
            assert_eq!(table.rows.iter().filter(|r| r.method == m).count(), 15);
        }
        let table = sweep_windows(&w, &[1024, 256], &methods, &est);
        assert_eq!(table.skipped_sizes.len(), 1);
        assert_eq!(table.rows.len(), 4);
    }

    #[test]
    fn plan_cache_reuses_plans() {
        let est = Estimator::new(EstimatorConfig::default());
        let a = est.plan_for(128, 30.0).unwrap();
        let b = est.plan_for(128, 30.0).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }
}
