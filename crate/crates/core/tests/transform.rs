use std::time::Instant;

use czt_hr::czt::{czt_fast, czt_matrix, CztPlan};
use czt_hr::SignalWindow;
use num_complex::Complex64;
use proptest::prelude::*;

const FS: f64 = 30.0;

fn max_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(1e-300, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

fn sizes() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![8usize, 16, 31, 64, 100, 128, 256])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn routes_agree(n in sizes(), m in sizes(), seed in any::<u64>()) {
        let plan = CztPlan::new(n, m, 0.66, 3.0, FS).unwrap();
        let x: Vec<f64> = (0..n).map(|i| ((seed.wrapping_add(i as u64) as f64) * 0.618).sin()).collect();
        let direct = plan.transform_direct(&x).unwrap();
        prop_assert!(max_rel(&plan.transform_matrix(&x).unwrap(), &direct) <= 1e-9);
        prop_assert!(max_rel(&plan.transform_fast(&x).unwrap(), &direct) <= 1e-8);
    }

    #[test]
    fn transform_is_linear(
        n in sizes(),
        xs in prop::collection::vec(-1.0f64..1.0, 256),
        ys in prop::collection::vec(-1.0f64..1.0, 256),
        a in -5.0f64..5.0,
        b in -5.0f64..5.0,
    ) {
        let plan = CztPlan::new(n, n, 0.66, 3.0, FS).unwrap();
        let (x, y) = (&xs[..n], &ys[..n]);
        let mix: Vec<f64> = x.iter().zip(y).map(|(x, y)| a * x + b * y).collect();
        let tx = plan.transform_matrix(x).unwrap();
        let ty = plan.transform_matrix(y).unwrap();
        let expected: Vec<Complex64> = tx.iter().zip(&ty).map(|(p, q)| a * p + b * q).collect();
        let scale = tx.iter().chain(&ty).map(|z| z.norm()).fold(1.0, f64::max) * (a.abs() + b.abs()).max(1.0);
        for (got, want) in plan.transform_matrix(&mix).unwrap().iter().zip(&expected) {
            prop_assert!((got.re - want.re).abs() <= 1e-10 * scale);
            prop_assert!((got.im - want.im).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn factors_lie_on_unit_circle(n in sizes(), m in sizes(), lo in 0.1f64..2.0, width in 0.1f64..10.0) {
        let hi = (lo + width).min(FS / 2.0);
        let plan = CztPlan::new(n, m, lo, hi, FS).unwrap();
        for (re, im) in plan.w_re().iter().zip(plan.w_im()) {
            prop_assert!((re * re + im * im - 1.0).abs() <= 1e-12);
        }
        for (re, im) in plan.a_re().iter().zip(plan.a_im()) {
            prop_assert!((re * re + im * im - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn dft_contour_matches_fft() {
    let mut planner = rustfft::FftPlanner::new();
    for n in [16, 60, 64, 256] {
        let plan = CztPlan::dft(n, FS).unwrap();
        let x: Vec<f64> = (0..n).map(|i| ((i * i) as f64 * 0.37).cos()).collect();
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        planner.plan_fft_forward(n).process(&mut buf);
        assert!(max_rel(&plan.transform_matrix(&x).unwrap(), &buf) <= 1e-9, "n = {n}");
        assert!(max_rel(&plan.transform_fast(&x).unwrap(), &buf) <= 1e-9, "n = {n}");
    }
}

#[test]
fn bin_grid_spans_band_inclusively() {
    let plan = CztPlan::heart_rate(256, FS).unwrap();
    let freqs = plan.bin_freqs_hz();
    assert_eq!(freqs.len(), 256);
    assert_eq!(freqs[0], 0.66);
    assert!((freqs[255] - 3.0).abs() < 1e-12);
    let ratio = (FS / 256.0) / plan.bin_width_hz();
    assert!((12.5..=13.1).contains(&ratio), "ratio {ratio}");
}

/// Reports the Bluestein speedup at N = M = 1024; only agreement is asserted.
#[test]
fn bluestein_speed_ratio_report() {
    let n = 1024;
    let plan = CztPlan::new(n, n, 0.66, 3.0, FS).unwrap();
    let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.29).sin()).collect();
    let window = SignalWindow::new(x, FS).unwrap();
    // warm the kernel cache
    czt_fast(&plan, &window).unwrap();
    let reps = 20;
    let t = Instant::now();
    for _ in 0..reps {
        czt_matrix(&plan, &window).unwrap();
    }
    let matrix = t.elapsed();
    let t = Instant::now();
    let mut fast = None;
    for _ in 0..reps {
        fast = Some(czt_fast(&plan, &window).unwrap());
    }
    let bluestein = t.elapsed();
    eprintln!(
        "N=M=1024: matrix {:.3} ms, bluestein {:.3} ms, ratio {:.1}x",
        matrix.as_secs_f64() * 1e3 / reps as f64,
        bluestein.as_secs_f64() * 1e3 / reps as f64,
        matrix.as_secs_f64() / bluestein.as_secs_f64()
    );
    let reference = czt_matrix(&plan, &window).unwrap();
    for (a, b) in fast.unwrap().values().iter().zip(reference.values()) {
        assert!((a - b).abs() <= 1e-8 * reference.values().iter().cloned().fold(0.0, f64::max));
    }
}
