use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn czthr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_czthr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = czthr(args);
    assert!(
        o.status.success(),
        "czthr {args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    stdout(&o)
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.to_str().unwrap();
    let mut args = vec!["synth", "--out", out];
    args.extend_from_slice(extra);
    let listing = ok(&args);
    PathBuf::from(listing.lines().next().unwrap())
}

/// Parses a data CSV into rows of string fields, skipping the header.
fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn czt_estimates_a_72_bpm_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = synth(dir.path(), &["--profile", "constant:72", "--duration", "60", "--snr", "20", "--seed", "7"]);
    let out = ok(&["estimate", "--input", trace.to_str().unwrap(), "--method", "czt", "--window", "256"]);
    let rows = rows(&out);
    assert_eq!(rows.len(), 7);
    for r in rows {
        let bpm: f64 = r[2].parse().unwrap();
        assert!((bpm - 72.0).abs() <= 0.28, "{bpm}");
    }
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let trace = synth(dir.path(), &[]);
    let input = trace.to_str().unwrap();

    let o = czthr(&["estimate", "--input", input, "--method", "deep"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());

    let o = czthr(&["estimate", "--input", "/definitely/missing.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    assert!(!o.stderr.is_empty());

    assert_eq!(czthr(&["estimate", "--input", input, "--bogus"]).status.code(), Some(2));
    assert_eq!(czthr(&["estimate", "--input", input, "--band", "3:1"]).status.code(), Some(2));
    assert_eq!(czthr(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(czthr(&["--help"]).status.code(), Some(0));
}

#[test]
fn spectrum_rows_cover_the_band() {
    let dir = tempfile::tempdir().unwrap();
    let trace = synth(dir.path(), &["--duration", "30"]);
    let input = trace.to_str().unwrap();

    let czt = rows(&ok(&["spectrum", "--input", input, "--method", "czt", "--window-index", "2"]));
    assert_eq!(czt.len(), 256);
    assert_eq!(czt[0][0], "0.66");
    assert_eq!(czt[255][0], "3");

    let fft = rows(&ok(&["spectrum", "--input", input, "--method", "fft"]));
    assert!(!fft.is_empty());
    for r in &fft {
        let f: f64 = r[0].parse().unwrap();
        assert!((0.66..=3.0).contains(&f));
    }

    let bpm = rows(&ok(&["spectrum", "--input", input, "--band-bpm", "40:180"]));
    assert_eq!(bpm[0][0], "0.666667");

    let o = czthr(&["spectrum", "--input", input, "--window-index", "3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_orders_czt_below_fft_and_matches_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let listing = ok(&[
        "synth", "--profile", "uniform:45:170", "--count", "8", "--duration", "60", "--harmonics", "0",
        "--seed", "21", "--out", dir.path().to_str().unwrap(),
    ]);
    let inputs = listing.lines().collect::<Vec<_>>().join(",");
    let table = rows(&ok(&["sweep", "--input", &inputs, "--sizes", "64,128,256,512", "--methods", "fft,czt"]));
    assert_eq!(table.len(), 8);
    for pair in table.chunks(2) {
        let fft: f64 = pair[0][4].parse().unwrap();
        let czt: f64 = pair[1][4].parse().unwrap();
        assert!(czt <= fft, "size {}: czt {czt} fft {fft}", pair[0][0]);
    }

    let trace = dir.path().join("synth_000.csv");
    let input = trace.to_str().unwrap();
    let gt: f64 = fs::read_to_string(dir.path().join("synth_000.gt.csv")).unwrap().lines().nth(1).unwrap()
        .split(',').nth(1).unwrap().parse().unwrap();
    let single = rows(&ok(&["sweep", "--input", input, "--sizes", "256", "--methods", "czt"]));
    let est = rows(&ok(&["estimate", "--input", input, "--window", "256", "--method", "czt"]));
    let mae = est.iter().map(|r| (r[2].parse::<f64>().unwrap() - gt).abs()).sum::<f64>() / est.len() as f64;
    let reported: f64 = single[0][4].parse().unwrap();
    // estimate rows and the sidecar are printed at 6 significant digits (~1e-3 BPM)
    assert!((reported - mae).abs() <= 1e-3, "{reported} vs {mae}");
}

#[test]
fn slow_short_windows_show_peak_skips() {
    let dir = tempfile::tempdir().unwrap();
    let trace = synth(dir.path(), &["--profile", "constant:45", "--duration", "60"]);
    let table = rows(&ok(&["sweep", "--input", trace.to_str().unwrap(), "--sizes", "64,256", "--methods", "peak,czt"]));
    let skipped = |size: &str, method: &str| -> usize {
        table.iter().find(|r| r[0] == size && r[1] == method).unwrap()[3].parse().unwrap()
    };
    assert!(skipped("64", "peak") > 0);
    assert_eq!(skipped("64", "czt"), 0);
}

#[test]
fn training_corrects_sensor_bias_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&[
        "synth", "--profile", "uniform:45:170", "--count", "24", "--duration", "35", "--harmonics", "0",
        "--sensor-offset", "3", "--seed", "3", "--out", data.to_str().unwrap(),
    ]);
    let ckpt = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let run = |out: &str, extra: &[&str]| -> serde_json::Value {
        let mut args = vec!["train", "--data", data.to_str().unwrap(), "--out", out, "--lr", "1e-2", "--epochs", "15", "--seed", "4"];
        args.extend_from_slice(extra);
        serde_json::from_str(&ok(&args)).unwrap()
    };
    let (a, b) = (ckpt("a.ckpt"), ckpt("b.ckpt"));
    let report = run(&a, &[]);
    let frozen = report["frozen_val_mae_bpm"].as_f64().unwrap();
    let trained = report["final_val_mae_bpm"].as_f64().unwrap();
    assert!(trained < frozen, "trained {trained} frozen {frozen}");
    assert_eq!(report["unregularized"], false);

    run(&b, &["--jobs", "2"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let unreg = run(&ckpt("c.ckpt"), &["--beta", "0", "--epochs", "1"]);
    assert_eq!(unreg["unregularized"], true);

    // the trained checkpoint drives the deep estimator
    let first = data.join("synth_000.csv");
    let est = ok(&["estimate", "--input", first.to_str().unwrap(), "--method", "deep", "--model", &a]);
    assert_eq!(rows(&est).len(), 4);
    let o = czthr(&["estimate", "--input", first.to_str().unwrap(), "--method", "deep", "--model", &a, "--window", "128"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let trace = synth(dir.path(), &["--duration", "30"]);
    let input = trace.to_str().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"method": "fft", "window": 128}"#).unwrap();
    let cfg = cfg.to_str().unwrap();

    let from_config = ok(&["--config", cfg, "estimate", "--input", input]);
    let explicit = ok(&["estimate", "--input", input, "--method", "fft", "--window", "128"]);
    assert_eq!(from_config, explicit);

    let overridden = ok(&["--config", cfg, "estimate", "--input", input, "--method", "czt"]);
    let expected = ok(&["estimate", "--input", input, "--method", "czt", "--window", "128"]);
    assert_eq!(overridden, expected);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"no_such_flag": 1}"#).unwrap();
    let o = czthr(&["--config", bad.to_str().unwrap(), "estimate", "--input", input]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluation_is_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["synth", "--profile", "uniform:50:150", "--count", "5", "--duration", "40", "--snr", "10", "--out", data.to_str().unwrap()]);
    let rows_a = dir.path().join("a.csv");
    let rows_b = dir.path().join("b.csv");
    let a = ok(&["evaluate", "--data", data.to_str().unwrap(), "--jobs", "1", "--rows", rows_a.to_str().unwrap()]);
    let b = ok(&["evaluate", "--data", data.to_str().unwrap(), "--jobs", "4", "--rows", rows_b.to_str().unwrap()]);
    assert_eq!(a, b);
    assert_eq!(fs::read(&rows_a).unwrap(), fs::read(&rows_b).unwrap());
    let json: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(json["methods"].as_array().unwrap().len(), 3);
    let csv = fs::read_to_string(&rows_a).unwrap();
    assert!(csv.starts_with("subject,window_index,method,gt_bpm,pred_bpm,skip_reason"));
    assert_eq!(csv.lines().count(), 1 + 5 * 4 * 3);
}

#[test]
fn synth_is_deterministic_under_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--profile", "ramp:60:90", "--duration", "20", "--snr", "15", "--seed", "11"];
    let ta = synth(a.path(), &args);
    let tb = synth(b.path(), &args);
    assert_eq!(fs::read(&ta).unwrap(), fs::read(&tb).unwrap());
    let gt = fs::read_to_string(a.path().join("synth_000.gt.csv")).unwrap();
    assert!(gt.starts_with("t,hr_bpm\n0,60\n"));
    let o = czthr(&["synth", "--profile", "wobble:3", "--out", a.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
