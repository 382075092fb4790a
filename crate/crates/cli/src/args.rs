use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Context;
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use czt_hr::hr::HrMethod;

use crate::{usage, CliResult};

#[derive(Debug, Parser)]
#[command(name = "czthr", version, about = "Heart-rate estimation with a zoomed chirp-z transform")]
pub struct Cli {
    /// JSON file whose keys mirror the flags; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for trace-parallel work (default: all cores).
    #[arg(long, global = true, value_name = "J")]
    pub jobs: Option<usize>,

    /// More diagnostics on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-window heart rate of one trace, as CSV.
    #[command(args_override_self = true)]
    Estimate(EstimateArgs),
    /// Train a deep CZT on a directory of traces.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Score methods against ground truth; JSON aggregates on stdout.
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// MAE per window size and method, as CSV.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Magnitude spectrum of one window, as CSV.
    #[command(args_override_self = true)]
    Spectrum(SpectrumArgs),
    /// Write synthetic traces with ground truth.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
}

pub const SUBCOMMANDS: [&str; 6] = ["estimate", "train", "evaluate", "sweep", "spectrum", "synth"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band(pub f64, pub f64);

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got `{s}`"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number `{hi}`"))?;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(format!("need 0 < lo < hi, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn parse_band(s: &str) -> Result<Band, String> {
    parse_pair(s).map(|(lo, hi)| Band(lo, hi))
}

fn parse_band_bpm(s: &str) -> Result<Band, String> {
    parse_pair(s).map(|(lo, hi)| Band(lo / 60.0, hi / 60.0))
}

fn parse_method(s: &str) -> Result<HrMethod, String> {
    s.parse::<HrMethod>().map_err(|e| e.to_string())
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct BandArgs {
    /// Analysis band in Hz, `lo:hi`.
    #[arg(long, value_parser = parse_band, conflicts_with = "band_bpm", value_name = "LO:HI")]
    pub band: Option<Band>,
    /// Analysis band in BPM, `lo:hi`.
    #[arg(long, value_parser = parse_band_bpm, value_name = "LO:HI")]
    pub band_bpm: Option<Band>,
}

impl BandArgs {
    pub fn band_hz(&self) -> Option<(f64, f64)> {
        self.band.or(self.band_bpm).map(|b| (b.0, b.1))
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, value_name = "TRACE.csv")]
    pub input: PathBuf,
    /// Sample rate; required when the trace has no `t` column.
    #[arg(long, value_parser = parse_positive)]
    pub fs: Option<f64>,
    #[arg(long, value_parser = parse_method, default_value = "czt")]
    pub method: HrMethod,
    /// Window length in samples (default 256, or the model's length).
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub overlap: usize,
    #[command(flatten)]
    pub band: BandArgs,
    /// Checkpoint for `--method deep`.
    #[arg(long, value_name = "CKPT")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of `<name>.csv` traces with `<name>.gt.csv` sidecars.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_name = "CKPT")]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_positive)]
    pub fs: Option<f64>,
    #[arg(long, default_value_t = 256)]
    pub window: usize,
    #[command(flatten)]
    pub band: BandArgs,
    #[arg(long, default_value_t = 100.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Gaussian target width in BPM; 0 gives one-hot targets.
    #[arg(long, default_value_t = 0.0)]
    pub smoothing_bpm: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of traces with sidecar ground truth.
    #[arg(long, value_name = "DIR", required_unless_present = "input", conflicts_with = "input")]
    pub data: Option<PathBuf>,
    /// Comma-separated trace files with sidecar ground truth.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, num_args = 1)]
    pub input: Vec<PathBuf>,
    #[arg(long, value_parser = parse_positive)]
    pub fs: Option<f64>,
    #[arg(long, value_parser = parse_method, value_delimiter = ',', action = ArgAction::Set, num_args = 1, default_value = "peak,fft,czt")]
    pub methods: Vec<HrMethod>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub overlap: usize,
    #[command(flatten)]
    pub band: BandArgs,
    #[arg(long, value_name = "CKPT")]
    pub model: Option<PathBuf>,
    /// Also write the per-window rows as CSV.
    #[arg(long, value_name = "FILE")]
    pub rows: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated trace files with sidecar ground truth.
    #[arg(long, required = true, value_delimiter = ',', action = ArgAction::Set, num_args = 1)]
    pub input: Vec<PathBuf>,
    #[arg(long, value_parser = parse_positive)]
    pub fs: Option<f64>,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, num_args = 1, default_value = "64,128,256,512")]
    pub sizes: Vec<usize>,
    #[arg(long, value_parser = parse_method, value_delimiter = ',', action = ArgAction::Set, num_args = 1, default_value = "peak,fft,czt")]
    pub methods: Vec<HrMethod>,
    #[command(flatten)]
    pub band: BandArgs,
    #[arg(long, value_name = "CKPT")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpectrumMethod {
    Fft,
    Czt,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long, value_name = "TRACE.csv")]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_positive)]
    pub fs: Option<f64>,
    #[arg(long, default_value_t = 256)]
    pub window: usize,
    #[arg(long, default_value_t = 0)]
    pub window_index: usize,
    #[arg(long, value_enum, default_value = "czt")]
    pub method: SpectrumMethod,
    #[command(flatten)]
    pub band: BandArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `constant:BPM`, `ramp:FROM:TO`, `piecewise:T=BPM,T=BPM,...`, or
    /// `uniform:LO:HI` (one constant rate per trace, drawn with the seed).
    #[arg(long, default_value = "constant:72")]
    pub profile: String,
    /// Seconds per trace.
    #[arg(long, default_value_t = 60.0, value_parser = parse_positive)]
    pub duration: f64,
    #[arg(long, default_value_t = 30.0, value_parser = parse_positive)]
    pub fs: f64,
    /// Additive white-noise SNR in dB; omit for a clean signal.
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Amplitudes of harmonics 2, 3, ... relative to the fundamental.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, num_args = 1, default_value = "0.35")]
    pub harmonics: Vec<f64>,
    /// Baseline wander as `FREQ_HZ:AMPLITUDE`.
    #[arg(long, value_name = "F:A")]
    pub wander: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Added to the written ground truth, emulating a biased reference sensor.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub sensor_offset: f64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// File name prefix.
    #[arg(long, default_value = "synth")]
    pub prefix: String,
}

/// Splices `--config` file entries in front of the user's own flags, right
/// after the subcommand, so explicit flags override them.
pub fn with_config(argv: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut path = None;
    let mut iter = argv.iter().skip(1);
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            path = iter.next().map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    let Some(map) = value.as_object() else {
        return usage(format!("config {} must be a JSON object", path.display()));
    };
    let mut extra = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" {
            return usage("config files cannot include other config files");
        }
        let text = match v {
            serde_json::Value::Bool(true) => {
                extra.push(OsString::from(flag));
                continue;
            }
            serde_json::Value::Bool(false) | serde_json::Value::Null => continue,
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            serde_json::Value::Object(_) => {
                return usage(format!("config key `{key}` must not be an object"));
            }
        };
        extra.push(OsString::from(format!("{flag}={text}")));
    }
    let Some(at) = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(argv);
    };
    let mut out = argv[..=at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[at + 1..]);
    Ok(out)
}
