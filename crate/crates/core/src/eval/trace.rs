//! Trace CSV ingestion and windowing.
//!
//! Signal files carry a header of either `t,ppg` (seconds, amplitude) or just
//! `ppg`, in which case the sample rate must be supplied. Ground-truth files
//! carry `t,hr_bpm` (any rate, linearly interpolated onto the signal samples)
//! or `window_index,hr_bpm` (one label per analysis window).

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::signal::SignalWindow;
use crate::synth::LabeledWindow;

use super::fmt_sig;

/// Relative spread of sample intervals tolerated in a `t` column.
const JITTER_TOL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    /// One heart rate per signal sample.
    PerSample(Vec<f64>),
    /// One heart rate per analysis window, by window index.
    PerWindow(Vec<f64>),
}

/// A signal recording with its reference heart rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub gt: GroundTruth,
    pub subject_id: String,
}

impl Trace {
    pub fn new(
        samples: Vec<f64>,
        sample_rate_hz: f64,
        gt: GroundTruth,
        subject_id: impl Into<String>,
    ) -> Result<Self> {
        // validates samples and rate
        SignalWindow::new(samples.clone(), sample_rate_hz)?;
        let values = match &gt {
            GroundTruth::PerSample(v) => {
                if v.len() < samples.len() {
                    return Err(Error::CoverageGap(format!(
                        "{} ground-truth samples for {} signal samples",
                        v.len(),
                        samples.len()
                    )));
                }
                v
            }
            GroundTruth::PerWindow(v) => v,
        };
        if let Some(bad) = values.iter().find(|g| !(**g > 0.0 && **g < 300.0)) {
            return Err(Error::InvalidWindow(format!(
                "ground-truth HR {bad} outside (0, 300)"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            gt,
            subject_id: subject_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn signal(&self) -> SignalWindow {
        SignalWindow::new(self.samples.clone(), self.sample_rate_hz)
            .expect("trace samples were validated")
    }
}

/// A parsed signal file.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFile {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    /// Sample timestamps, when the file had a `t` column.
    pub times: Option<Vec<f64>>,
}

impl SignalFile {
    pub fn window(&self) -> Result<SignalWindow> {
        SignalWindow::new(self.samples.clone(), self.sample_rate_hz)
    }

    fn time_of(&self, i: usize) -> f64 {
        match &self.times {
            Some(t) => t[i],
            None => i as f64 / self.sample_rate_hz,
        }
    }
}

/// `foo.csv` -> `foo.gt.csv`.
pub fn gt_sidecar_path(signal_path: &Path) -> PathBuf {
    let stem = signal_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    signal_path.with_file_name(format!("{stem}.gt.csv"))
}

struct Table {
    headers: Vec<String>,
    rows: Vec<(usize, Vec<f64>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::Trace {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Trace {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        let values = record
            .iter()
            .map(|field| {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("`{field}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        message: format!("non-finite value `{field}`"),
                    });
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((line, values));
    }
    if rows.is_empty() {
        return Err(Error::Trace {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    Ok(Table { headers, rows })
}

fn column(table: &Table, name: &str) -> Option<usize> {
    table.headers.iter().position(|h| h == name)
}

fn check_increasing(path: &Path, table: &Table, col: usize) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        let t = row[col];
        if let Some(&prev) = out.last() {
            if t <= prev {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: *line,
                    message: format!("non-monotonic timestamp {t} after {prev}"),
                });
            }
        }
        out.push(t);
    }
    Ok(out)
}

/// Reads a `t,ppg` or `ppg` signal file.
pub fn load_signal(path: &Path, sample_rate_hz: Option<f64>) -> Result<SignalFile> {
    let table = read_table(path)?;
    let ppg = column(&table, "ppg").ok_or_else(|| Error::Trace {
        path: path.to_path_buf(),
        message: "missing `ppg` column".into(),
    })?;
    let samples: Vec<f64> = table.rows.iter().map(|(_, r)| r[ppg]).collect();
    let (fs, times) = match column(&table, "t") {
        Some(tc) => {
            let times = check_increasing(path, &table, tc)?;
            if times.len() < 2 {
                return Err(Error::Trace {
                    path: path.to_path_buf(),
                    message: "need at least two timestamps to infer the sample rate".into(),
                });
            }
            let span = times[times.len() - 1] - times[0];
            let est = (times.len() - 1) as f64 / span;
            let dt = 1.0 / est;
            if let Some(w) = times.windows(2).find(|w| ((w[1] - w[0]) - dt).abs() > JITTER_TOL * dt) {
                return Err(Error::Trace {
                    path: path.to_path_buf(),
                    message: format!("non-uniform sampling near t = {}", w[0]),
                });
            }
            let fs = match sample_rate_hz {
                Some(fs) => {
                    if (fs - est).abs() > JITTER_TOL * fs {
                        log::warn!("{}: --fs {fs} disagrees with timestamps ({est:.4} Hz)", path.display());
                    }
                    fs
                }
                None => est,
            };
            (fs, Some(times))
        }
        None => {
            let fs = sample_rate_hz.ok_or_else(|| Error::Trace {
                path: path.to_path_buf(),
                message: "no `t` column; the sample rate must be given".into(),
            })?;
            (fs, None)
        }
    };
    SignalWindow::new(samples.clone(), fs).map_err(|e| Error::Trace {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(SignalFile {
        samples,
        sample_rate_hz: fs,
        times,
    })
}

fn interpolate(ts: &[f64], vs: &[f64], t: f64) -> f64 {
    if t <= ts[0] {
        return vs[0];
    }
    let i = ts.partition_point(|&x| x <= t);
    if i >= ts.len() {
        return vs[vs.len() - 1];
    }
    let (t0, t1) = (ts[i - 1], ts[i]);
    vs[i - 1] + (vs[i] - vs[i - 1]) * (t - t0) / (t1 - t0)
}

fn load_gt(path: &Path, signal: &SignalFile) -> Result<GroundTruth> {
    let table = read_table(path)?;
    let hr = column(&table, "hr_bpm").ok_or_else(|| Error::Trace {
        path: path.to_path_buf(),
        message: "missing `hr_bpm` column".into(),
    })?;
    if let Some((line, row)) = table.rows.iter().find(|(_, r)| !(r[hr] > 0.0 && r[hr] < 300.0)) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: *line,
            message: format!("heart rate {} outside (0, 300)", row[hr]),
        });
    }
    if let Some(tc) = column(&table, "t") {
        let ts = check_increasing(path, &table, tc)?;
        let vs: Vec<f64> = table.rows.iter().map(|(_, r)| r[hr]).collect();
        let step = if ts.len() > 1 {
            (ts[ts.len() - 1] - ts[0]) / (ts.len() - 1) as f64
        } else {
            1.0 / signal.sample_rate_hz
        };
        let first = signal.time_of(0);
        let last = signal.time_of(signal.samples.len() - 1);
        if last > ts[ts.len() - 1] + step || first < ts[0] - step {
            return Err(Error::CoverageGap(format!(
                "{}: ground truth spans [{}, {}] s but the signal spans [{first}, {last}] s",
                path.display(),
                ts[0],
                ts[ts.len() - 1]
            )));
        }
        let per_sample = (0..signal.samples.len())
            .map(|i| interpolate(&ts, &vs, signal.time_of(i)))
            .collect();
        return Ok(GroundTruth::PerSample(per_sample));
    }
    if let Some(wc) = column(&table, "window_index") {
        let mut labels = Vec::with_capacity(table.rows.len());
        for (line, row) in &table.rows {
            let idx = row[wc];
            if idx != labels.len() as f64 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: *line,
                    message: format!("expected window_index {}, got {idx}", labels.len()),
                });
            }
            labels.push(row[hr]);
        }
        return Ok(GroundTruth::PerWindow(labels));
    }
    Err(Error::Trace {
        path: path.to_path_buf(),
        message: "ground truth needs a `t` or `window_index` column".into(),
    })
}

/// Loads a signal file and its ground truth into a validated [`Trace`].
/// The subject id is the signal file's stem.
pub fn load_trace(signal_path: &Path, gt_path: &Path, sample_rate_hz: Option<f64>) -> Result<Trace> {
    let signal = load_signal(signal_path, sample_rate_hz)?;
    let gt = load_gt(gt_path, &signal)?;
    let subject = signal_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    Trace::new(signal.samples, signal.sample_rate_hz, gt, subject)
}

/// Number of windows of `size` samples with `overlap` that fit in `len`.
pub fn window_count(len: usize, size: usize, overlap: usize) -> usize {
    if size == 0 || overlap >= size || size > len {
        return 0;
    }
    (len - size) / (size - overlap) + 1
}

/// Cuts the trace into windows; leftover tail samples are dropped. Labels are
/// the mean per-sample HR over each window, or the per-window value.
pub fn window_trace(trace: &Trace, size: usize, overlap: usize) -> Result<Vec<LabeledWindow>> {
    if size < 2 {
        return Err(Error::Config(format!("window size must be >= 2, got {size}")));
    }
    if overlap >= size {
        return Err(Error::Config(format!(
            "overlap ({overlap}) must be smaller than the window ({size})"
        )));
    }
    if size > trace.len() {
        return Err(Error::WindowTooLarge {
            size,
            len: trace.len(),
        });
    }
    let stride = size - overlap;
    (0..window_count(trace.len(), size, overlap))
        .map(|i| {
            let start = i * stride;
            let label = match &trace.gt {
                GroundTruth::PerSample(hr) => {
                    hr[start..start + size].iter().sum::<f64>() / size as f64
                }
                GroundTruth::PerWindow(hr) => *hr.get(i).ok_or_else(|| {
                    Error::CoverageGap(format!(
                        "{}: no label for window {i} ({} labels)",
                        trace.subject_id,
                        hr.len()
                    ))
                })?,
            };
            let window = SignalWindow::new(
                trace.samples[start..start + size].to_vec(),
                trace.sample_rate_hz,
            )?;
            LabeledWindow::new(window, label, format!("{}#{i}", trace.subject_id))
        })
        .collect()
}

/// Writes a `t,ppg` signal file.
pub fn write_signal(path: &Path, window: &SignalWindow) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    writeln!(out, "t,ppg")?;
    let fs = window.sample_rate_hz();
    for (i, v) in window.samples().iter().enumerate() {
        // full-precision timestamps keep the inferred sample rate exact
        writeln!(out, "{},{}", i as f64 / fs, fmt_sig(*v))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a `t,hr_bpm` ground-truth file aligned to the signal samples.
pub fn write_gt(path: &Path, sample_rate_hz: f64, hr_bpm: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    writeln!(out, "t,hr_bpm")?;
    for (i, v) in hr_bpm.iter().enumerate() {
        writeln!(out, "{},{}", i as f64 / sample_rate_hz, fmt_sig(*v))?;
    }
    out.flush()?;
    Ok(())
}
