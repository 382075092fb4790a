use std::fs;
use std::path::Path;

use czt_hr::eval::{
    evaluate, gt_sidecar_path, load_signal, load_trace, metrics, sweep_sizes, window_trace,
    write_gt, write_signal, GroundTruth, Trace,
};
use czt_hr::hr::{Estimator, EstimatorConfig, HrMethod};
use czt_hr::synth::{synth_trace, HrProfile, SynthSpec};
use czt_hr::Error;
use proptest::prelude::*;

const FS: f64 = 30.0;

fn synthetic(bpm: f64, seconds: f64, subject: &str) -> Trace {
    let t = synth_trace(&SynthSpec {
        phase_rad: bpm * 0.01,
        ..SynthSpec::new(HrProfile::Constant { bpm }, seconds, FS)
    })
    .unwrap();
    Trace::new(t.window.samples().to_vec(), FS, GroundTruth::PerSample(t.hr_bpm), subject).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

proptest! {
    #[test]
    fn metrics_ignore_pair_order(
        pairs in prop::collection::vec((30.0f64..200.0, 30.0f64..200.0), 1..64),
        rotate in 0usize..64,
    ) {
        let (p, g): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
        let mut shuffled = pairs.clone();
        shuffled.reverse();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        let (ps, gs): (Vec<f64>, Vec<f64>) = shuffled.into_iter().unzip();
        let a = metrics(&p, &g).unwrap();
        let b = metrics(&ps, &gs).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(1.0);
        prop_assert!(close(a.mae, b.mae) && close(a.rmse, b.rmse) && close(a.mape, b.mape));
        match (a.pearson_r, b.pearson_r) {
            (Some(x), Some(y)) => prop_assert!(close(x, y)),
            (None, None) => {}
            other => prop_assert!(false, "pearson presence differs: {:?}", other),
        }
    }

    #[test]
    fn rmse_dominates_mae(pairs in prop::collection::vec((1.0f64..300.0, 1.0f64..300.0), 1..100)) {
        let (p, g): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = metrics(&p, &g).unwrap();
        prop_assert!(m.rmse >= m.mae && m.mae >= 0.0 && m.mape >= 0.0);
        if let Some(r) = m.pearson_r {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }
}

#[test]
fn loads_timestamped_trace_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let trace = synthetic(72.0, 60.0, "s1");
    let signal_path = dir.path().join("s1.csv");
    write_signal(&signal_path, &trace.signal()).unwrap();
    let GroundTruth::PerSample(hr) = &trace.gt else { unreachable!() };
    write_gt(&gt_sidecar_path(&signal_path), FS, hr).unwrap();

    let loaded = load_trace(&signal_path, &dir.path().join("s1.gt.csv"), None).unwrap();
    assert_eq!(loaded.subject_id, "s1");
    assert_eq!(loaded.len(), 1800);
    assert!((loaded.sample_rate_hz - FS).abs() < 1e-6);
    let windows = window_trace(&loaded, 256, 0).unwrap();
    assert_eq!(windows.len(), 7);
    assert!(windows.iter().all(|w| (w.hr_gt_bpm - 72.0).abs() < 1e-9));
}

#[test]
fn ppg_only_needs_sample_rate() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "x.csv", "ppg\n0.1\n0.2\n0.3\n");
    assert!(matches!(load_signal(&path, None), Err(Error::Trace { .. })));
    let s = load_signal(&path, Some(25.0)).unwrap();
    assert_eq!(s.samples, vec![0.1, 0.2, 0.3]);
    assert_eq!(s.sample_rate_hz, 25.0);
}

#[test]
fn nan_row_is_reported_by_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "bad.csv", "t,ppg\n0,1.0\n0.1,NaN\n0.2,1.0\n");
    let err = load_signal(&path, None).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    assert!(err.to_string().contains("line 3"), "{err}");
}

#[test]
fn non_monotonic_timestamps_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "t.csv", "t,ppg\n0,1\n0.2,2\n0.1,3\n");
    let err = load_signal(&path, None).unwrap_err();
    assert!(err.to_string().contains("non-monotonic"), "{err}");
}

#[test]
fn short_ground_truth_is_a_coverage_gap() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("t,ppg\n");
    for i in 0..300 {
        body += &format!("{},{}\n", i as f64 / FS, (i as f64 * 0.3).sin());
    }
    let signal = write(dir.path(), "s.csv", &body);
    let gt = write(dir.path(), "s.gt.csv", "t,hr_bpm\n0,70\n1,71\n2,72\n");
    let err = load_trace(&signal, &gt, None).unwrap_err();
    assert!(err.to_string().contains("ground-truth coverage gap"), "{err}");
}

#[test]
fn per_window_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let signal = write(dir.path(), "w.csv", &format!("ppg\n{}", "0.5\n-0.5\n".repeat(300)));
    let gt = write(dir.path(), "w.gt.csv", "window_index,hr_bpm\n0,60\n1,65\n");
    let trace = load_trace(&signal, &gt, Some(FS)).unwrap();
    let w = window_trace(&trace, 256, 0).unwrap();
    assert_eq!(w.iter().map(|w| w.hr_gt_bpm).collect::<Vec<_>>(), vec![60.0, 65.0]);
}

#[test]
fn czt_beats_fft_on_constant_rate_corpus() {
    let traces: Vec<Trace> = [52.3, 67.9, 81.1, 99.4, 123.7]
        .iter()
        .enumerate()
        .map(|(i, &bpm)| synthetic(bpm, 40.0, &format!("subj{i}")))
        .collect();
    let est = Estimator::new(EstimatorConfig::default());
    let report = evaluate(&traces, &[HrMethod::FftArgmax, HrMethod::CztArgmax], 256, 0, &est).unwrap();
    let fft = report.summary(HrMethod::FftArgmax).unwrap().metrics.unwrap();
    let czt = report.summary(HrMethod::CztArgmax).unwrap().metrics.unwrap();
    assert!(czt.mae < fft.mae, "czt {} fft {}", czt.mae, fft.mae);
    assert_eq!(report.rows.len(), 5 * 4 * 2);
}

#[test]
fn peak_failures_are_recorded_not_fatal() {
    let traces = vec![synthetic(45.0, 60.0, "slow")];
    let est = Estimator::new(EstimatorConfig::default());
    let report = evaluate(&traces, &[HrMethod::PeakIbi, HrMethod::CztArgmax], 64, 0, &est).unwrap();
    let peak = report.summary(HrMethod::PeakIbi).unwrap();
    assert!(peak.n_skipped > 0);
    assert_eq!(peak.n_windows, 28);
    assert_eq!(report.summary(HrMethod::CztArgmax).unwrap().n_skipped, 0);
    assert!(report
        .rows
        .iter()
        .filter(|r| r.pred_bpm.is_none())
        .all(|r| r.skip_reason.as_deref().unwrap().contains("insufficient peaks")));
}

#[test]
fn evaluation_rejects_bad_requests() {
    let est = Estimator::new(EstimatorConfig::default());
    assert!(matches!(evaluate(&[], &[HrMethod::CztArgmax], 256, 0, &est), Err(Error::EmptyInput(_))));
    let traces = vec![synthetic(70.0, 20.0, "a")];
    assert!(matches!(evaluate(&traces, &[HrMethod::DeepCzt], 256, 0, &est), Err(Error::Config(_))));
}

#[test]
fn reports_are_byte_identical_across_thread_counts() {
    let traces: Vec<Trace> = (0..6).map(|i| synthetic(55.0 + 13.0 * i as f64, 30.0, &format!("t{i}"))).collect();
    let est = Estimator::new(EstimatorConfig::default());
    let run = || {
        let r = evaluate(&traces, &HrMethod::ALL[..3], 128, 64, &est).unwrap();
        (r.to_csv_string(), r.summaries_json().to_string())
    };
    let reference = run();
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        assert_eq!(pool.install(run), reference);
    }
}

#[test]
fn sweep_orders_czt_below_fft() {
    let traces = vec![synthetic(77.7, 60.0, "tone")];
    let est = Estimator::new(EstimatorConfig::default());
    let sweep = sweep_sizes(&traces, &[HrMethod::FftArgmax, HrMethod::CztArgmax], &[64, 128, 256, 512], &est).unwrap();
    for row in &sweep {
        let mae = |m| row.summaries.iter().find(|s| s.method == m).unwrap().metrics.unwrap().mae;
        assert!(mae(HrMethod::CztArgmax) <= mae(HrMethod::FftArgmax), "size {}", row.window_size);
    }
}
