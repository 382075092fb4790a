//! Synthetic pulse signals with known heart rate.
//!
//! A signal is a sum of cosines at the instantaneous pulse phase and its
//! harmonics, plus optional baseline wander and white Gaussian noise:
//!
//! ```text
//! x(t) = sum_h a_h cos(2 pi h phi(t) + h phase0) + wander(t) + noise(t)
//! phi(t) = integral of f_HR over [0, t]
//! ```
//!
//! The heart-rate profile is piecewise linear, so `phi` is integrated in
//! closed form.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalWindow;

/// Allowed instantaneous heart-rate range.
pub const SYNTH_HR_RANGE_BPM: (f64, f64) = (40.0, 180.0);
const MIN_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HrProfile {
    Constant { bpm: f64 },
    /// Linear from `start_bpm` at t = 0 to `end_bpm` at the end of the signal.
    Ramp { start_bpm: f64, end_bpm: f64 },
    /// `(time_s, bpm)` knots, linearly interpolated and held flat outside.
    Piecewise { knots: Vec<(f64, f64)> },
}

impl HrProfile {
    fn knots(&self, duration_s: f64) -> Vec<(f64, f64)> {
        match self {
            HrProfile::Constant { bpm } => vec![(0.0, *bpm)],
            HrProfile::Ramp { start_bpm, end_bpm } => {
                vec![(0.0, *start_bpm), (duration_s, *end_bpm)]
            }
            HrProfile::Piecewise { knots } => knots.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        let knots = self.knots(1.0);
        if knots.is_empty() {
            return Err(Error::InvalidSynth("profile has no knots".into()));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidSynth(
                "profile knot times must be strictly increasing".into(),
            ));
        }
        let (lo, hi) = SYNTH_HR_RANGE_BPM;
        if let Some((_, bpm)) = knots.iter().find(|(_, b)| !(*b >= lo && *b <= hi)) {
            return Err(Error::InvalidSynth(format!(
                "heart rate {bpm} BPM outside [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Piecewise-linear rate function with an exact phase integral.
struct RateCurve {
    knots: Vec<(f64, f64)>,
}

impl RateCurve {
    fn bpm_at(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            let ((t0, b0), (t1, b1)) = (w[0], w[1]);
            if t <= t1 {
                return b0 + (b1 - b0) * (t - t0) / (t1 - t0);
            }
        }
        k[k.len() - 1].1
    }

    /// Beats elapsed between 0 and `t`.
    fn cycles(&self, t: f64) -> f64 {
        // the rate is linear between consecutive breakpoints, so the
        // trapezoid rule is exact
        let mut points = vec![0.0];
        points.extend(self.knots.iter().map(|k| k.0).filter(|&k| k > 0.0 && k < t));
        points.push(t);
        let beats_per_min: f64 = points
            .windows(2)
            .map(|w| 0.5 * (self.bpm_at(w[0]) + self.bpm_at(w[1])) * (w[1] - w[0]))
            .sum();
        beats_per_min / 60.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: u32,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wander {
    pub freq_hz: f64,
    pub amplitude: f64,
}

/// Full description of one synthetic signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub hr_profile: HrProfile,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// Overtones relative to a unit-amplitude fundamental.
    pub harmonics: Vec<Harmonic>,
    pub noise_snr_db: Option<f64>,
    pub baseline_wander: Option<Wander>,
    /// Pulse phase at t = 0, radians.
    pub phase_rad: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Noise-free spec with the default second harmonic (0.35).
    pub fn new(hr_profile: HrProfile, duration_s: f64, sample_rate_hz: f64) -> Self {
        Self {
            hr_profile,
            duration_s,
            sample_rate_hz,
            harmonics: vec![Harmonic {
                order: 2,
                amplitude: 0.35,
            }],
            noise_snr_db: None,
            baseline_wander: None,
            phase_rad: 0.0,
            seed: 0,
        }
    }

    /// A pure cosine at a constant rate.
    pub fn tone(bpm: f64, n_samples: usize, sample_rate_hz: f64) -> Self {
        Self {
            harmonics: Vec::new(),
            ..Self::new(
                HrProfile::Constant { bpm },
                n_samples as f64 / sample_rate_hz,
                sample_rate_hz,
            )
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidSynth("sample rate must be positive".into()));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::InvalidSynth("duration must be positive".into()));
        }
        if self.n_samples() < MIN_SAMPLES {
            return Err(Error::InvalidSynth(format!(
                "duration * fs gives {} samples, need at least {MIN_SAMPLES}",
                self.n_samples()
            )));
        }
        self.hr_profile.validate()?;
        if let Some(h) = self.harmonics.iter().find(|h| h.order < 2) {
            return Err(Error::InvalidSynth(format!(
                "harmonic order must be >= 2, got {}",
                h.order
            )));
        }
        if let Some(w) = &self.baseline_wander {
            if !(w.freq_hz >= 0.0 && w.freq_hz < 0.2) {
                return Err(Error::InvalidSynth(format!(
                    "wander frequency {} Hz must be below 0.2 Hz",
                    w.freq_hz
                )));
            }
        }
        if let Some(snr) = self.noise_snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidSynth("SNR must be finite".into()));
            }
        }
        Ok(())
    }
}

/// A synthesized signal with its per-sample truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrace {
    pub window: SignalWindow,
    /// Noise-free signal.
    pub clean: Vec<f64>,
    /// Instantaneous heart rate at every sample, BPM.
    pub hr_bpm: Vec<f64>,
}

impl SynthTrace {
    pub fn mean_hr_bpm(&self) -> f64 {
        self.hr_bpm.iter().sum::<f64>() / self.hr_bpm.len() as f64
    }
}

pub fn synth_signal(spec: &SynthSpec) -> Result<SignalWindow> {
    Ok(synth_trace(spec)?.window)
}

/// Synthesizes the signal and keeps the noise-free copy and HR series.
pub fn synth_trace(spec: &SynthSpec) -> Result<SynthTrace> {
    spec.validate()?;
    let n = spec.n_samples();
    let fs = spec.sample_rate_hz;
    let curve = RateCurve {
        knots: spec.hr_profile.knots(n as f64 / fs),
    };
    let mut clean = Vec::with_capacity(n);
    let mut hr = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        let phase = TAU * curve.cycles(t) + spec.phase_rad;
        let mut v = phase.cos();
        for h in &spec.harmonics {
            v += h.amplitude * (h.order as f64 * phase).cos();
        }
        if let Some(w) = &spec.baseline_wander {
            v += w.amplitude * (TAU * w.freq_hz * t).sin();
        }
        clean.push(v);
        hr.push(curve.bpm_at(t));
    }
    let mut samples = clean.clone();
    if let Some(snr_db) = spec.noise_snr_db {
        let power = clean.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for s in &mut samples {
            let z: f64 = rng.sample(StandardNormal);
            *s += sigma * z;
        }
    }
    Ok(SynthTrace {
        window: SignalWindow::new(samples, fs)?,
        clean,
        hr_bpm: hr,
    })
}

/// Maps true heart rate to what a reference sensor would report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensorModel {
    #[default]
    Identity,
    Affine { gain: f64, offset_bpm: f64 },
    QuantizeToInt,
}

impl SensorModel {
    pub fn offset(offset_bpm: f64) -> Self {
        SensorModel::Affine {
            gain: 1.0,
            offset_bpm,
        }
    }

    pub fn apply(&self, bpm: f64) -> f64 {
        match *self {
            SensorModel::Identity => bpm,
            SensorModel::Affine { gain, offset_bpm } => gain * bpm + offset_bpm,
            SensorModel::QuantizeToInt => bpm.round(),
        }
    }
}

/// Signal window with its reference heart rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub window: SignalWindow,
    pub hr_gt_bpm: f64,
    pub source_tag: String,
}

impl LabeledWindow {
    pub fn new(window: SignalWindow, hr_gt_bpm: f64, source_tag: impl Into<String>) -> Result<Self> {
        if !(hr_gt_bpm > 0.0 && hr_gt_bpm < 300.0) {
            return Err(Error::InvalidWindow(format!(
                "ground-truth HR {hr_gt_bpm} outside (0, 300)"
            )));
        }
        Ok(Self {
            window,
            hr_gt_bpm,
            source_tag: source_tag.into(),
        })
    }

    pub fn into_pair(self) -> (SignalWindow, f64) {
        (self.window, self.hr_gt_bpm)
    }
}

/// Recipe for a family of fixed-length constant-rate windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFamily {
    pub bpm_range: (f64, f64),
    pub window_len: usize,
    pub sample_rate_hz: f64,
    pub harmonics: Vec<Harmonic>,
    pub noise_snr_db: Option<f64>,
    pub baseline_wander: Option<Wander>,
    pub seed: u64,
}

impl DatasetFamily {
    /// Noise-free pure tones with random phase.
    pub fn tones(bpm_range: (f64, f64), window_len: usize, sample_rate_hz: f64, seed: u64) -> Self {
        Self {
            bpm_range,
            window_len,
            sample_rate_hz,
            harmonics: Vec::new(),
            noise_snr_db: None,
            baseline_wander: None,
            seed,
        }
    }
}

/// `count` rates drawn uniformly from `[lo, hi]`, reproducible under `seed`.
pub fn draw_rates(bpm_range: (f64, f64), count: usize, seed: u64) -> Result<Vec<f64>> {
    let (lo, hi) = bpm_range;
    let (min, max) = SYNTH_HR_RANGE_BPM;
    if !(lo >= min && hi <= max && lo <= hi) {
        return Err(Error::InvalidSynth(format!(
            "bpm range [{lo}, {hi}] must lie inside [{min}, {max}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo })
        .collect())
}

/// `count` windows with uniformly drawn rates, labeled through `sensor`.
pub fn synth_dataset(
    family: &DatasetFamily,
    count: usize,
    sensor: SensorModel,
) -> Result<Vec<LabeledWindow>> {
    let (lo, hi) = family.bpm_range;
    let (min, max) = SYNTH_HR_RANGE_BPM;
    if !(lo >= min && hi <= max && lo <= hi) {
        return Err(Error::InvalidSynth(format!(
            "bpm range [{lo}, {hi}] must lie inside [{min}, {max}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(family.seed);
    (0..count)
        .map(|i| {
            let bpm = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let spec = SynthSpec {
                hr_profile: HrProfile::Constant { bpm },
                duration_s: family.window_len as f64 / family.sample_rate_hz,
                sample_rate_hz: family.sample_rate_hz,
                harmonics: family.harmonics.clone(),
                noise_snr_db: family.noise_snr_db,
                baseline_wander: family.baseline_wander,
                phase_rad: rng.random_range(0.0..TAU),
                seed: rng.random(),
            };
            let trace = synth_trace(&spec)?;
            let label = sensor.apply(trace.mean_hr_bpm());
            if !(label >= min && label <= max) {
                return Err(Error::InvalidSynth(format!(
                    "sensor label {label} BPM outside [{min}, {max}]"
                )));
            }
            LabeledWindow::new(trace.window, label, format!("synth#{i}"))
        })
        .collect()
}
