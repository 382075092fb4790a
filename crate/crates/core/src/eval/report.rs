use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, Metrics};
use super::trace::{window_trace, Trace};
use super::{fmt_sig, round_sig};
use crate::error::{Error, Result};
use crate::hr::{Estimator, HrMethod};

/// One (window, method) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub subject: String,
    pub window_index: usize,
    pub method: HrMethod,
    pub gt_bpm: f64,
    pub pred_bpm: Option<f64>,
    /// Why no prediction was produced.
    pub skip_reason: Option<String>,
}

/// Per-method aggregate over all non-skipped windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: HrMethod,
    pub n_windows: usize,
    pub n_skipped: usize,
    /// Absent when every window was skipped.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub window_size: usize,
    pub overlap: usize,
    pub rows: Vec<EvalRow>,
    pub summaries: Vec<MethodSummary>,
}

impl EvalReport {
    pub fn summary(&self, method: HrMethod) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["subject", "window_index", "method", "gt_bpm", "pred_bpm", "skip_reason"])?;
        for r in &self.rows {
            w.write_record([
                r.subject.clone(),
                r.window_index.to_string(),
                r.method.to_string(),
                fmt_sig(r.gt_bpm),
                r.pred_bpm.map(fmt_sig).unwrap_or_default(),
                r.skip_reason.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Aggregates only, rounded to six significant digits.
    pub fn summaries_json(&self) -> serde_json::Value {
        let rounded: Vec<MethodSummary> = self
            .summaries
            .iter()
            .map(|s| MethodSummary {
                metrics: s.metrics.map(|m| Metrics {
                    mae: round_sig(m.mae),
                    mae_sd: round_sig(m.mae_sd),
                    rmse: round_sig(m.rmse),
                    mape: round_sig(m.mape),
                    mape_sd: round_sig(m.mape_sd),
                    pearson_r: m.pearson_r.map(round_sig),
                    ..m
                }),
                ..s.clone()
            })
            .collect();
        serde_json::json!({
            "window_size": self.window_size,
            "overlap": self.overlap,
            "methods": rounded,
        })
    }
}

fn summarize(rows: &[EvalRow], method: HrMethod) -> Result<MethodSummary> {
    let of_method: Vec<&EvalRow> = rows.iter().filter(|r| r.method == method).collect();
    let (preds, gts): (Vec<f64>, Vec<f64>) = of_method
        .iter()
        .filter_map(|r| r.pred_bpm.map(|p| (p, r.gt_bpm)))
        .unzip();
    Ok(MethodSummary {
        method,
        n_windows: of_method.len(),
        n_skipped: of_method.len() - preds.len(),
        metrics: if preds.is_empty() {
            None
        } else {
            Some(metrics(&preds, &gts)?)
        },
    })
}

/// Windows every trace, runs every method on every window, and aggregates.
/// Per-window estimator failures become skipped rows; traces shorter than
/// one window contribute nothing. Row order is (trace, window, method) and
/// does not depend on the thread count.
pub fn evaluate(
    traces: &[Trace],
    methods: &[HrMethod],
    window_size: usize,
    overlap: usize,
    estimator: &Estimator<'_>,
) -> Result<EvalReport> {
    if traces.is_empty() {
        return Err(Error::EmptyInput("no traces to evaluate".into()));
    }
    if methods.is_empty() {
        return Err(Error::EmptyInput("no methods selected".into()));
    }
    if methods.contains(&HrMethod::DeepCzt) && estimator.model().is_none() {
        return Err(Error::Config("the deep method requires a model".into()));
    }
    let per_trace = traces
        .par_iter()
        .map(|trace| {
            let windows = match window_trace(trace, window_size, overlap) {
                Ok(w) => w,
                Err(Error::WindowTooLarge { size, len }) => {
                    log::warn!(
                        "{}: {len} samples is shorter than one {size}-sample window; skipped",
                        trace.subject_id
                    );
                    Vec::new()
                }
                Err(e) => return Err(e),
            };
            let rows = windows
                .par_iter()
                .enumerate()
                .flat_map_iter(|(i, lw)| {
                    methods.iter().map(move |&method| {
                        let outcome = estimator.estimate(method, &lw.window);
                        EvalRow {
                            subject: trace.subject_id.clone(),
                            window_index: i,
                            method,
                            gt_bpm: lw.hr_gt_bpm,
                            pred_bpm: outcome.as_ref().ok().map(|e| e.bpm),
                            skip_reason: outcome.err().map(|e| e.to_string()),
                        }
                    })
                })
                .collect::<Vec<_>>();
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<EvalRow> = per_trace.into_iter().flatten().collect();
    let summaries = methods
        .iter()
        .map(|&m| summarize(&rows, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        window_size,
        overlap,
        rows,
        summaries,
    })
}

/// One line of a window-size sweep over traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub window_size: usize,
    pub summaries: Vec<MethodSummary>,
}

/// [`evaluate`] at each window size without overlap.
pub fn sweep_sizes(
    traces: &[Trace],
    methods: &[HrMethod],
    sizes: &[usize],
    estimator: &Estimator<'_>,
) -> Result<Vec<SweepSummary>> {
    sizes
        .iter()
        .map(|&size| {
            let report = evaluate(traces, methods, size, 0, estimator)?;
            Ok(SweepSummary {
                window_size: size,
                summaries: report.summaries,
            })
        })
        .collect()
}
