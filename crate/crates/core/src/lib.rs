//! Heart-rate estimation from pulse signals with a zoomed chirp-z transform.
//!
//! The crate is organized around the estimation pipeline:
//!
//! * [`czt`] plans and evaluates the chirp-z transform on a narrow band of
//!   the unit circle, with matrix, direct and Bluestein routes.
//! * [`periodogram`] is the FFT baseline on the uniform DFT grid.
//! * [`hr`] turns windows into heart-rate estimates (peaks, FFT, CZT, deep).
//! * [`deep`] holds the trainable CZT, its losses, gradient, optimizer and
//!   checkpoint format.
//! * [`synth`] generates pulse-like signals with known ground truth.
//! * [`eval`] loads traces, windows them, and computes MAE/RMSE/MAPE/R.
//!
//! ```
//! use czt_hr::{czt::CztPlan, hr::{hr_from_spectrum, HrMethod}, SignalWindow};
//!
//! let fs = 30.0;
//! let x: Vec<f64> = (0..256)
//!     .map(|n| (std::f64::consts::TAU * 1.2 * n as f64 / fs).cos())
//!     .collect();
//! let window = SignalWindow::new(x, fs)?;
//! let plan = CztPlan::heart_rate(256, fs)?;
//! let spectrum = czt_hr::czt::czt_fast(&plan, &window.centered())?;
//! let hr = hr_from_spectrum(&spectrum, HrMethod::CztArgmax)?;
//! assert!((hr.bpm - 72.0).abs() < 0.28);
//! # Ok::<(), czt_hr::Error>(())
//! ```

pub mod czt;
pub mod deep;
mod error;
pub mod eval;
pub mod hr;
pub mod periodogram;
mod signal;
pub mod synth;

pub use error::{Error, Result};
pub use signal::{SignalWindow, Spectrum};

// Code blocks in the guide run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/zoom-transform.md")]
    mod zoom_transform {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/deep-czt.md")]
    mod deep_czt {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
