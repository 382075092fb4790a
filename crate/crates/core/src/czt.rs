//! Chirp-z transform restricted to the unit circle.
//!
//! A [`CztPlan`] evaluates the z-transform of an `N`-sample real signal at `M`
//! points `z_k = A * W^-k` that sweep an arc of the unit circle between two
//! frequencies. With `A = exp(i 2 pi f_start / fs)` and
//! `W = exp(-i 2 pi df / fs)` every bin sits at `f_start + k df`, so all `M`
//! bins can be spent inside the heart-rate band instead of across the whole
//! `[0, fs)` range as with a DFT.
//!
//! Three evaluation routes are provided and are expected to agree:
//!
//! * [`czt_matrix`]: the real-block product `W * A * x` using the precomputed
//!   cos/sin Vandermonde blocks (the same blocks the trainable model starts
//!   from).
//! * [`czt_direct`]: per-bin summation of `x[n] z_k^-n`, used as an oracle.
//! * [`czt_fast`]: Bluestein's chirp convolution, `O((N + M) log(N + M))`.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::signal::{SignalWindow, Spectrum};

/// Lower edge of the heart-rate band (40 BPM).
pub const HR_BAND_LOW_HZ: f64 = 0.66;
/// Upper edge of the heart-rate band (180 BPM).
pub const HR_BAND_HIGH_HZ: f64 = 3.0;

const UNIT_TOL: f64 = 1e-12;

/// Precomputed zoom-transform parameterization for fixed `N`, `M` and band.
///
/// Immutable after construction and safe to share between threads.
#[derive(Clone)]
pub struct CztPlan {
    n_input: usize,
    m_bins: usize,
    f_start_hz: f64,
    f_end_hz: f64,
    sample_rate_hz: f64,
    /// Phase advance per sample of the first bin, `2 pi f_start / fs`.
    start_angle: f64,
    /// Phase step between bins, `2 pi df / fs`.
    step_angle: f64,
    a_point: Complex64,
    w_ratio: Complex64,
    w_re: Vec<f64>,
    w_im: Vec<f64>,
    a_re: Vec<f64>,
    a_im: Vec<f64>,
    bluestein: OnceLock<Bluestein>,
}

impl CztPlan {
    /// Plans a zoom over `[f_start_hz, f_end_hz]` with endpoint-inclusive bins.
    pub fn new(
        n_input: usize,
        m_bins: usize,
        f_start_hz: f64,
        f_end_hz: f64,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if n_input < 2 {
            return Err(Error::InvalidPlan(format!("n_input must be >= 2, got {n_input}")));
        }
        if m_bins < 2 {
            return Err(Error::InvalidPlan(format!("m_bins must be >= 2, got {m_bins}")));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidPlan(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !(f_start_hz.is_finite() && f_end_hz.is_finite()) {
            return Err(Error::InvalidPlan("band edges must be finite".into()));
        }
        if f_start_hz <= 0.0 {
            return Err(Error::InvalidPlan(format!(
                "f_start must be positive, got {f_start_hz}"
            )));
        }
        if f_start_hz >= f_end_hz {
            return Err(Error::InvalidPlan(format!(
                "f_start ({f_start_hz}) must be below f_end ({f_end_hz})"
            )));
        }
        let nyquist = sample_rate_hz / 2.0;
        if f_end_hz > nyquist {
            return Err(Error::InvalidPlan(format!(
                "f_end ({f_end_hz} Hz) exceeds Nyquist ({nyquist} Hz)"
            )));
        }
        let df = (f_end_hz - f_start_hz) / (m_bins - 1) as f64;
        let start_angle = TAU * f_start_hz / sample_rate_hz;
        let step_angle = TAU * df / sample_rate_hz;
        Ok(Self::build(
            n_input,
            m_bins,
            sample_rate_hz,
            start_angle,
            step_angle,
            f_start_hz,
            f_end_hz,
        ))
    }

    /// Default heart-rate plan: band [0.66, 3.0] Hz and `M = N`.
    pub fn heart_rate(n_input: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(n_input, n_input, HR_BAND_LOW_HZ, HR_BAND_HIGH_HZ, sample_rate_hz)
    }

    /// Plans an arbitrary unit-circle contour given `A` and `W` directly.
    ///
    /// The band-edge checks of [`CztPlan::new`] do not apply, so this also
    /// covers the full DFT contour. `W` must step in the direction of
    /// increasing frequency (`arg W < 0`).
    pub fn with_contour(
        n_input: usize,
        m_bins: usize,
        sample_rate_hz: f64,
        a_point: Complex64,
        w_ratio: Complex64,
    ) -> Result<Self> {
        if n_input < 2 || m_bins < 2 {
            return Err(Error::InvalidPlan(format!(
                "n_input and m_bins must be >= 2, got {n_input} and {m_bins}"
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidPlan(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if (a_point.norm() - 1.0).abs() > UNIT_TOL || (w_ratio.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidPlan(
                "A and W must lie on the unit circle".into(),
            ));
        }
        let start_angle = a_point.arg().rem_euclid(TAU);
        let step_angle = -w_ratio.arg();
        if !(step_angle > 0.0) {
            return Err(Error::InvalidPlan(
                "W must advance towards higher frequencies (arg W < 0)".into(),
            ));
        }
        let f_start_hz = start_angle * sample_rate_hz / TAU;
        let f_end_hz = f_start_hz + (m_bins - 1) as f64 * step_angle * sample_rate_hz / TAU;
        Ok(Self::build(
            n_input,
            m_bins,
            sample_rate_hz,
            start_angle,
            step_angle,
            f_start_hz,
            f_end_hz,
        ))
    }

    /// The `N`-point DFT contour: `A = 1`, `W = exp(-i 2 pi / N)`, `M = N`.
    pub fn dft(n_input: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::with_contour(
            n_input,
            n_input,
            sample_rate_hz,
            Complex64::new(1.0, 0.0),
            Complex64::from_polar(1.0, -TAU / n_input as f64),
        )
    }

    fn build(
        n_input: usize,
        m_bins: usize,
        sample_rate_hz: f64,
        start_angle: f64,
        step_angle: f64,
        f_start_hz: f64,
        f_end_hz: f64,
    ) -> Self {
        let mut w_re = Vec::with_capacity(m_bins * n_input);
        let mut w_im = Vec::with_capacity(m_bins * n_input);
        for i in 0..m_bins {
            for j in 0..n_input {
                let (s, c) = (step_angle * (i * j) as f64).sin_cos();
                w_re.push(c);
                w_im.push(-s);
            }
        }
        let (a_re, a_im) = (0..n_input)
            .map(|n| {
                let (s, c) = (-start_angle * n as f64).sin_cos();
                (c, s)
            })
            .unzip();
        Self {
            n_input,
            m_bins,
            f_start_hz,
            f_end_hz,
            sample_rate_hz,
            start_angle,
            step_angle,
            a_point: Complex64::from_polar(1.0, start_angle),
            w_ratio: Complex64::from_polar(1.0, -step_angle),
            w_re,
            w_im,
            a_re,
            a_im,
            bluestein: OnceLock::new(),
        }
    }

    pub fn n_input(&self) -> usize {
        self.n_input
    }

    pub fn m_bins(&self) -> usize {
        self.m_bins
    }

    pub fn f_start_hz(&self) -> f64 {
        self.f_start_hz
    }

    pub fn f_end_hz(&self) -> f64 {
        self.f_end_hz
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn a_point(&self) -> Complex64 {
        self.a_point
    }

    pub fn w_ratio(&self) -> Complex64 {
        self.w_ratio
    }

    /// Bin spacing in Hz.
    pub fn bin_width_hz(&self) -> f64 {
        self.step_angle * self.sample_rate_hz / TAU
    }

    /// Frequency of bin `k` in Hz.
    pub fn bin_freq_hz(&self, k: usize) -> f64 {
        self.f_start_hz + k as f64 * self.bin_width_hz()
    }

    pub fn bin_freqs_hz(&self) -> Vec<f64> {
        (0..self.m_bins).map(|k| self.bin_freq_hz(k)).collect()
    }

    /// Bin whose frequency is closest to `freq_hz`, clamped to the grid.
    pub fn nearest_bin(&self, freq_hz: f64) -> usize {
        let k = ((freq_hz - self.f_start_hz) / self.bin_width_hz()).round();
        k.clamp(0.0, (self.m_bins - 1) as f64) as usize
    }

    /// Row-major `M x N` block of `cos(theta i j)`.
    pub fn w_re(&self) -> &[f64] {
        &self.w_re
    }

    /// Row-major `M x N` block of `-sin(theta i j)`.
    pub fn w_im(&self) -> &[f64] {
        &self.w_im
    }

    /// Real part of the diagonal of `A^-n`.
    pub fn a_re(&self) -> &[f64] {
        &self.a_re
    }

    /// Imaginary part of the diagonal of `A^-n`.
    pub fn a_im(&self) -> &[f64] {
        &self.a_im
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_input {
            return Err(Error::LengthMismatch {
                expected: self.n_input,
                got: len,
            });
        }
        Ok(())
    }

    pub(crate) fn check_window(&self, window: &SignalWindow) -> Result<()> {
        self.check_len(window.len())?;
        let fs = window.sample_rate_hz();
        if (fs - self.sample_rate_hz).abs() > 1e-9 * self.sample_rate_hz {
            return Err(Error::RateMismatch {
                expected: self.sample_rate_hz,
                got: fs,
            });
        }
        Ok(())
    }

    /// Complex spectrum via the real block expansion of `W A x`.
    pub fn transform_matrix(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        let n = self.n_input;
        let ax_re: Vec<f64> = x.iter().zip(&self.a_re).map(|(x, a)| x * a).collect();
        let ax_im: Vec<f64> = x.iter().zip(&self.a_im).map(|(x, a)| x * a).collect();
        let out = self
            .w_re
            .chunks_exact(n)
            .zip(self.w_im.chunks_exact(n))
            .map(|(wr, wi)| {
                let mut re = 0.0;
                let mut im = 0.0;
                for j in 0..n {
                    re += wr[j] * ax_re[j] - wi[j] * ax_im[j];
                    im += wi[j] * ax_re[j] + wr[j] * ax_im[j];
                }
                Complex64::new(re, im)
            })
            .collect();
        Ok(out)
    }

    /// Complex spectrum by summing `x[n] z_k^-n` for each bin independently.
    pub fn transform_direct(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        let out = (0..self.m_bins)
            .map(|k| {
                let omega = self.start_angle + k as f64 * self.step_angle;
                x.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (n, &xn)| {
                    acc + Complex64::from_polar(xn, -omega * n as f64)
                })
            })
            .collect();
        Ok(out)
    }

    /// Complex spectrum by Bluestein's chirp convolution.
    pub fn transform_fast(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        let bs = self.bluestein.get_or_init(|| Bluestein::new(self));
        Ok(bs.run(self, x))
    }
}

impl fmt::Debug for CztPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CztPlan")
            .field("n_input", &self.n_input)
            .field("m_bins", &self.m_bins)
            .field("f_start_hz", &self.f_start_hz)
            .field("f_end_hz", &self.f_end_hz)
            .field("sample_rate_hz", &self.sample_rate_hz)
            .finish_non_exhaustive()
    }
}

/// `W^(t^2 / 2)` with `W = exp(-i theta)`.
fn chirp(theta: f64, t: usize) -> Complex64 {
    let t = t as f64;
    Complex64::from_polar(1.0, -theta * t * t / 2.0)
}

/// Convolution kernels for the Bluestein route.
#[derive(Clone)]
struct Bluestein {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// FFT of the `W^(-t^2/2)` filter, pre-scaled by `1 / len`.
    kernel_fft: Vec<Complex64>,
    /// `W^(k^2/2)` for `k < max(N, M)`.
    chirps: Vec<Complex64>,
}

impl Bluestein {
    fn new(plan: &CztPlan) -> Self {
        let (n, m) = (plan.n_input, plan.m_bins);
        let len = (n + m - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let theta = plan.step_angle;
        let chirps: Vec<Complex64> = (0..n.max(m)).map(|t| chirp(theta, t)).collect();

        let scale = 1.0 / len as f64;
        let mut kernel = vec![Complex64::new(0.0, 0.0); len];
        for (t, c) in chirps.iter().enumerate().take(m) {
            kernel[t] = c.conj() * scale;
        }
        for t in 1..n {
            kernel[len - t] = chirps[t].conj() * scale;
        }
        forward.process(&mut kernel);
        Self {
            len,
            forward,
            inverse,
            kernel_fft: kernel,
            chirps,
        }
    }

    fn run(&self, plan: &CztPlan, x: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for (i, &xn) in x.iter().enumerate() {
            let a = Complex64::new(plan.a_re[i], plan.a_im[i]);
            buf[i] = a * self.chirps[i] * xn;
        }
        self.forward.process(&mut buf);
        buf.iter_mut()
            .zip(&self.kernel_fft)
            .for_each(|(b, k)| *b *= k);
        self.inverse.process(&mut buf);
        buf.iter()
            .take(plan.m_bins)
            .zip(&self.chirps)
            .map(|(g, c)| g * c)
            .collect()
    }
}

fn magnitude_spectrum(plan: &CztPlan, bins: Vec<Complex64>) -> Result<Spectrum> {
    let values = bins.into_iter().map(|z| z.norm()).collect();
    Spectrum::new(plan.bin_freqs_hz(), values, false)
}

/// Magnitude spectrum via the precomputed real-block matrices.
pub fn czt_matrix(plan: &CztPlan, window: &SignalWindow) -> Result<Spectrum> {
    plan.check_window(window)?;
    magnitude_spectrum(plan, plan.transform_matrix(window.samples())?)
}

/// Magnitude spectrum by direct per-bin summation.
pub fn czt_direct(plan: &CztPlan, window: &SignalWindow) -> Result<Spectrum> {
    plan.check_window(window)?;
    magnitude_spectrum(plan, plan.transform_direct(window.samples())?)
}

/// Magnitude spectrum by Bluestein's algorithm.
pub fn czt_fast(plan: &CztPlan, window: &SignalWindow) -> Result<Spectrum> {
    plan.check_window(window)?;
    magnitude_spectrum(plan, plan.transform_fast(window.samples())?)
}
