use std::path::PathBuf;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid signal window: {0}")]
    InvalidWindow(String),

    #[error("invalid transform plan: {0}")]
    InvalidPlan(String),

    #[error("input length {got} does not match plan length {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("sample rate {got} Hz does not match plan rate {expected} Hz")]
    RateMismatch { expected: f64, got: f64 },

    #[error("frequency band [{lo}, {hi}] Hz contains no grid bins")]
    EmptyBand { lo: f64, hi: f64 },

    #[error("no spectral energy")]
    NoSpectralEnergy,

    #[error("insufficient peaks: found {found}, need at least 2")]
    InsufficientPeaks { found: usize },

    #[error("distribution grids differ")]
    GridMismatch,

    #[error("zero probability at target bin {bin}")]
    ZeroProbability { bin: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("model expects {expected} input samples and {expected_bins} bins, got {got}")]
    DimensionMismatch {
        expected: usize,
        expected_bins: usize,
        got: usize,
    },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("unexpected end of checkpoint")]
    TruncatedCheckpoint,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid synthesis spec: {0}")]
    InvalidSynth(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Trace { path: PathBuf, message: String },

    #[error("ground-truth coverage gap: {0}")]
    CoverageGap(String),

    #[error("window size {size} exceeds signal length {len}")]
    WindowTooLarge { size: usize, len: usize },

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("nothing to evaluate: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
