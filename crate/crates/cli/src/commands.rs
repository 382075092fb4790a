use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use czt_hr::czt::CztPlan;
use czt_hr::deep::{load_checkpoint, save_checkpoint, train, DeepCztModel, TrainConfig};
use czt_hr::eval::{
    evaluate, fmt_sig, gt_sidecar_path, load_signal, load_trace, round_sig, sweep_sizes,
    window_count, window_trace, write_gt, write_signal, Trace,
};
use czt_hr::hr::{Estimator, EstimatorConfig, HrMethod};
use czt_hr::synth::{draw_rates, synth_trace, Harmonic, HrProfile, SynthSpec, Wander};
use czt_hr::SignalWindow;
use serde_json::Value;

use crate::args::{
    BandArgs, Cli, Command, EstimateArgs, EvaluateArgs, SpectrumArgs, SpectrumMethod, SweepArgs,
    SynthArgs, TrainArgs,
};
use crate::{usage, CliError, CliResult};

const DEFAULT_WINDOW: usize = 256;

pub fn run(cli: Cli) -> CliResult {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return usage("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Synth(a) => synth(a),
    }
}

fn estimator_config(band: &BandArgs) -> EstimatorConfig {
    let mut config = EstimatorConfig::default();
    if let Some(b) = band.band_hz() {
        config.band_hz = b;
    }
    config
}

fn load_model(path: &Path) -> anyhow::Result<DeepCztModel> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_checkpoint(&bytes).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// Loads `--model` and enforces "model iff deep".
fn model_for(methods: &[HrMethod], path: Option<&Path>) -> CliResult<Option<DeepCztModel>> {
    let wants_deep = methods.contains(&HrMethod::DeepCzt);
    match (wants_deep, path) {
        (true, None) => usage("the deep method requires --model"),
        (false, Some(p)) => {
            log::warn!("--model {} ignored: deep method not selected", p.display());
            Ok(None)
        }
        (_, p) => Ok(p.map(load_model).transpose()?),
    }
}

fn window_len(requested: Option<usize>, model: Option<&DeepCztModel>) -> CliResult<usize> {
    let len = requested.or(model.map(DeepCztModel::n_input)).unwrap_or(DEFAULT_WINDOW);
    if len < 2 {
        return usage("--window must be at least 2");
    }
    if let Some(m) = model {
        if m.n_input() != len {
            return Err(CliError::Runtime(anyhow!(czt_hr::Error::DimensionMismatch {
                expected: m.n_input(),
                expected_bins: m.m_bins(),
                got: len,
            })));
        }
    }
    Ok(len)
}

fn check_overlap(window: usize, overlap: usize) -> CliResult {
    if overlap >= window {
        return usage(format!("--overlap ({overlap}) must be smaller than --window ({window})"));
    }
    Ok(())
}

fn trace_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            name.ends_with(".csv") && !name.ends_with(".gt.csv")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no trace CSVs in {}", dir.display());
    }
    Ok(files)
}

fn load_traces(files: &[PathBuf], fs: Option<f64>) -> anyhow::Result<Vec<Trace>> {
    files
        .iter()
        .map(|p| {
            let gt = gt_sidecar_path(p);
            if !gt.exists() {
                bail!("{}: missing ground truth {}", p.display(), gt.display());
            }
            Ok(load_trace(p, &gt, fs)?)
        })
        .collect()
}

/// Rounds every non-integer number to six significant digits.
fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round_sig(x)))
            .map_or(Value::Null, Value::Number),
        Value::Array(items) => Value::Array(items.into_iter().map(round_json).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

fn print_json(v: Value) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &round_json(v))?;
    writeln!(out)?;
    Ok(())
}

fn estimate(a: EstimateArgs) -> CliResult {
    let model = model_for(&[a.method], a.model.as_deref())?;
    let window = window_len(a.window, model.as_ref())?;
    check_overlap(window, a.overlap)?;
    let signal = load_signal(&a.input, a.fs)?;
    let n = signal.samples.len();
    if window > n {
        return Err(anyhow!(czt_hr::Error::WindowTooLarge { size: window, len: n }).into());
    }
    let mut est = Estimator::new(estimator_config(&a.band));
    if let Some(m) = &model {
        est = est.with_model(m);
    }
    let full = signal.window()?;
    let stride = window - a.overlap;
    let mut out = std::io::BufWriter::new(std::io::stdout().lock());
    writeln!(out, "window_index,t_start_s,hr_bpm,confidence,skip_reason")?;
    for k in 0..window_count(n, window, a.overlap) {
        let start = k * stride;
        let t0 = signal
            .times
            .as_ref()
            .map_or(start as f64 / signal.sample_rate_hz, |t| t[start]);
        let w = full.slice(start, window)?;
        match est.estimate(a.method, &w) {
            Ok(e) => writeln!(
                out,
                "{k},{},{},{},",
                fmt_sig(t0),
                fmt_sig(e.bpm),
                e.confidence.map(fmt_sig).unwrap_or_default()
            )?,
            Err(e) => writeln!(out, "{k},{},,,{}", fmt_sig(t0), csv_field(&e.to_string()))?,
        }
    }
    out.flush()?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let config = TrainConfig {
        alpha: a.alpha,
        beta: a.beta,
        learning_rate: a.lr,
        weight_decay: a.weight_decay,
        batch_size: a.batch_size,
        epochs: a.epochs,
        target_smoothing_bpm: a.smoothing_bpm,
        val_fraction: a.val_fraction,
        seed: a.seed,
        ..TrainConfig::default()
    };
    if let Err(e) = config.validate() {
        return usage(e.to_string());
    }
    if a.window < 2 {
        return usage("--window must be at least 2");
    }
    let traces = load_traces(&trace_files(&a.data)?, a.fs)?;
    let fs = traces[0].sample_rate_hz;
    if let Some(t) = traces.iter().find(|t| (t.sample_rate_hz - fs).abs() > 1e-6 * fs) {
        return Err(anyhow!(
            "{} is sampled at {} Hz but {} at {fs} Hz; training needs one rate",
            t.subject_id,
            t.sample_rate_hz,
            traces[0].subject_id
        )
        .into());
    }
    let mut dataset: Vec<(SignalWindow, f64)> = Vec::new();
    for t in &traces {
        match window_trace(t, a.window, 0) {
            Ok(ws) => dataset.extend(ws.into_iter().map(|w| w.into_pair())),
            Err(czt_hr::Error::WindowTooLarge { .. }) => {
                log::warn!("{}: shorter than one window, skipped", t.subject_id)
            }
            Err(e) => return Err(e.into()),
        }
    }
    let (lo, hi) = estimator_config(&a.band).band_hz;
    let plan = CztPlan::new(a.window, a.window, lo, hi, fs)?;
    let mut model = DeepCztModel::from_plan(plan.into());
    log::info!("training on {} windows from {} traces", dataset.len(), traces.len());
    let report = train(&mut model, &dataset, &config)?;
    std::fs::write(&a.out, save_checkpoint(&model))
        .with_context(|| format!("writing {}", a.out.display()))?;
    let mut json = serde_json::to_value(&report)?;
    if let Value::Object(map) = &mut json {
        map.insert("checkpoint".into(), Value::String(a.out.display().to_string()));
        map.insert("frozen_val_mae_bpm".into(), report.initial_val_mae_bpm.into());
    }
    print_json(json)?;
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> CliResult {
    let model = model_for(&a.methods, a.model.as_deref())?;
    let window = window_len(a.window, model.as_ref())?;
    check_overlap(window, a.overlap)?;
    let files = match &a.data {
        Some(dir) => trace_files(dir)?,
        None => a.input.clone(),
    };
    let traces = load_traces(&files, a.fs)?;
    let mut est = Estimator::new(estimator_config(&a.band));
    if let Some(m) = &model {
        est = est.with_model(m);
    }
    let report = evaluate(&traces, &a.methods, window, a.overlap, &est)?;
    if let Some(path) = &a.rows {
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(file)?;
    }
    print_json(report.summaries_json())?;
    Ok(())
}

fn sweep(a: SweepArgs) -> CliResult {
    if a.sizes.iter().any(|&s| s < 2) {
        return usage("--sizes entries must be at least 2");
    }
    let model = model_for(&a.methods, a.model.as_deref())?;
    let traces = load_traces(&a.input, a.fs)?;
    let mut est = Estimator::new(estimator_config(&a.band));
    if let Some(m) = &model {
        est = est.with_model(m);
    }
    let rows = sweep_sizes(&traces, &a.methods, &a.sizes, &est)?;
    let mut out = std::io::BufWriter::new(std::io::stdout().lock());
    writeln!(out, "window_size,method,n_windows,n_skipped,mae,rmse,mape,pearson_r")?;
    for row in rows {
        for s in row.summaries {
            let f = |x: Option<f64>| x.map(fmt_sig).unwrap_or_default();
            let m = s.metrics;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                row.window_size,
                s.method,
                s.n_windows,
                s.n_skipped,
                f(m.map(|m| m.mae)),
                f(m.map(|m| m.rmse)),
                f(m.map(|m| m.mape)),
                f(m.and_then(|m| m.pearson_r)),
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

fn spectrum(a: SpectrumArgs) -> CliResult {
    if a.window < 2 {
        return usage("--window must be at least 2");
    }
    let signal = load_signal(&a.input, a.fs)?;
    let count = window_count(signal.samples.len(), a.window, 0);
    if a.window_index >= count {
        return Err(anyhow!(
            "window index {} out of range: {} samples hold {count} windows of {}",
            a.window_index,
            signal.samples.len(),
            a.window
        )
        .into());
    }
    let w = signal.window()?.slice(a.window_index * a.window, a.window)?;
    let est = Estimator::new(estimator_config(&a.band));
    let (spec, column) = match a.method {
        SpectrumMethod::Czt => (est.czt_spectrum(&w)?, "magnitude"),
        SpectrumMethod::Fft => (est.fft_spectrum(&w)?, "power"),
    };
    let mut out = std::io::BufWriter::new(std::io::stdout().lock());
    writeln!(out, "freq_hz,{column}")?;
    for (f, v) in spec.freqs_hz().iter().zip(spec.values()) {
        writeln!(out, "{},{}", fmt_sig(*f), fmt_sig(*v))?;
    }
    out.flush()?;
    Ok(())
}

enum ProfileArg {
    Fixed(HrProfile),
    Uniform(f64, f64),
}

fn parse_profile(s: &str) -> Result<ProfileArg, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}` in --profile"));
    let (kind, rest) = s.split_once(':').ok_or_else(|| format!("bad --profile `{s}`"))?;
    let parts: Vec<&str> = rest.split(':').collect();
    match (kind, parts.as_slice()) {
        ("constant", [bpm]) => Ok(ProfileArg::Fixed(HrProfile::Constant { bpm: num(bpm)? })),
        ("ramp", [from, to]) => Ok(ProfileArg::Fixed(HrProfile::Ramp {
            start_bpm: num(from)?,
            end_bpm: num(to)?,
        })),
        ("uniform", [lo, hi]) => Ok(ProfileArg::Uniform(num(lo)?, num(hi)?)),
        ("piecewise", [knots]) => {
            let knots = knots
                .split(',')
                .map(|k| {
                    let (t, b) = k.split_once('=').ok_or_else(|| format!("knot `{k}` is not T=BPM"))?;
                    Ok((num(t)?, num(b)?))
                })
                .collect::<Result<Vec<_>, String>>()?;
            Ok(ProfileArg::Fixed(HrProfile::Piecewise { knots }))
        }
        _ => Err(format!(
            "bad --profile `{s}`; expected constant:BPM, ramp:A:B, piecewise:T=BPM,... or uniform:LO:HI"
        )),
    }
}

fn synth(a: SynthArgs) -> CliResult {
    let profile = parse_profile(&a.profile).or_else(usage)?;
    if a.count == 0 {
        return usage("--count must be at least 1");
    }
    let wander = match &a.wander {
        None => None,
        Some(w) => {
            let parsed = w
                .split_once(':')
                .and_then(|(f, amp)| Some((f.parse().ok()?, amp.parse().ok()?)));
            let Some((freq_hz, amplitude)) = parsed else {
                return usage(format!("--wander expects FREQ:AMPLITUDE, got `{w}`"));
            };
            Some(Wander { freq_hz, amplitude })
        }
    };
    let harmonics: Vec<Harmonic> = a
        .harmonics
        .iter()
        .enumerate()
        .filter(|(_, &amp)| amp != 0.0)
        .map(|(i, &amplitude)| Harmonic {
            order: i as u32 + 2,
            amplitude,
        })
        .collect();
    let profiles: Vec<HrProfile> = match profile {
        ProfileArg::Fixed(p) => vec![p; a.count],
        ProfileArg::Uniform(lo, hi) => draw_rates((lo, hi), a.count, a.seed)?
            .into_iter()
            .map(|bpm| HrProfile::Constant { bpm })
            .collect(),
    };
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut stdout = std::io::stdout().lock();
    for (i, hr_profile) in profiles.into_iter().enumerate() {
        let spec = SynthSpec {
            hr_profile,
            duration_s: a.duration,
            sample_rate_hz: a.fs,
            harmonics: harmonics.clone(),
            noise_snr_db: a.snr,
            baseline_wander: wander,
            phase_rad: 0.0,
            seed: a.seed.wrapping_add(i as u64),
        };
        let trace = synth_trace(&spec)?;
        let gt: Vec<f64> = trace.hr_bpm.iter().map(|h| h + a.sensor_offset).collect();
        if let Some(bad) = gt.iter().find(|g| !(**g > 0.0 && **g < 300.0)) {
            return usage(format!("--sensor-offset pushes ground truth to {bad} BPM"));
        }
        let path = a.out.join(format!("{}_{i:03}.csv", a.prefix));
        write_signal(&path, &trace.window)?;
        write_gt(&gt_sidecar_path(&path), a.fs, &gt)?;
        writeln!(stdout, "{}", path.display())?;
    }
    Ok(())
}
