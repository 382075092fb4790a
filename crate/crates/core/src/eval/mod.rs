//! Loading recorded traces, windowing them, and scoring estimators against
//! reference heart rates.

mod metrics;
mod report;
mod trace;

pub use metrics::{metrics, Metrics};
pub use report::{evaluate, sweep_sizes, EvalReport, EvalRow, MethodSummary, SweepSummary};
pub use trace::{
    gt_sidecar_path, load_signal, load_trace, window_count, window_trace, write_gt,
    write_signal, GroundTruth, SignalFile, Trace,
};

/// Rounds to six significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// Six-significant-digit text, without exponent for ordinary magnitudes.
pub fn fmt_sig(x: f64) -> String {
    format!("{}", round_sig(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig(72.123456789), "72.1235");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1234567.0), "1234570");
        assert_eq!(fmt_sig(-0.000123456789), "-0.000123457");
    }
}
