use flapping_core::morphology::*;
use flapping_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn circle(n: usize, r: f64) -> Vec<Point> {
    (0..n)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}

/// Cubic B-spline value by Boehm knot insertion: insert `u` until it has
/// multiplicity 3, then read the curve point off the refined polygon.
fn de_boor_by_insertion(knots: &[f64], ctrl: &[f64], u: f64) -> f64 {
    let mut k = knots.to_vec();
    let mut c = ctrl.to_vec();
    for _ in 0..3 {
        let mult = k.iter().filter(|&&x| x == u).count();
        if mult >= 3 {
            break;
        }
        let span = k.iter().rposition(|&x| x <= u).unwrap();
        let mut nc = Vec::with_capacity(c.len() + 1);
        for i in 0..=c.len() {
            if i + 3 <= span {
                nc.push(c[i]);
            } else if i > span {
                nc.push(c[i - 1]);
            } else {
                let a = (u - k[i]) / (k[i + 3] - k[i]);
                nc.push((1.0 - a) * c[i - 1] + a * c[i]);
            }
        }
        k.insert(span + 1, u);
        c = nc;
    }
    let span = k.iter().rposition(|&x| x <= u).unwrap();
    c[span - 3]
}

#[test]
fn basis_partition_of_unity_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [4usize, 9, 22] {
        let knots = periodic_knots(n);
        for _ in 0..1000 {
            let u: f64 = rng.random_range(0.0..1.0);
            let s: f64 = (0..n + 3).map(|i| bspline_basis(i, 3, u, &knots)).sum();
            assert!((s - 1.0).abs() < 1e-12, "n={n} u={u} sum={s}");
        }
    }
}

#[test]
fn degree_zero_is_indicator() {
    let knots = [0.0, 0.5, 1.0, 2.0];
    assert_eq!(bspline_basis(0, 0, 0.0, &knots), 1.0);
    assert_eq!(bspline_basis(0, 0, 0.5, &knots), 0.0);
    assert_eq!(bspline_basis(1, 0, 0.5, &knots), 1.0);
    assert_eq!(bspline_basis(2, 0, 0.99, &knots), 0.0);
}

#[test]
fn cubic_basis_peak_matches_knot_insertion() {
    // 8 basis functions on knots 0..12; N_3 has support [3, 7]
    let knots: Vec<f64> = (0..12).map(|j| j as f64).collect();
    let central = 5.0;
    let value = bspline_basis(3, 3, central, &knots);
    let mut unit = vec![0.0; 8];
    unit[3] = 1.0;
    let oracle = de_boor_by_insertion(&knots, &unit, central);
    assert!((value - oracle).abs() < 1e-14);
    assert!((value - 2.0 / 3.0).abs() < 1e-14);
}

#[test]
fn closure_and_c2_across_knots() {
    let model = SplineModel::new(FOREWING_CONTROL_POINTS.to_vec()).unwrap();
    let a = evaluate_curve(&model, 0.0);
    let b = evaluate_curve(&model, 1.0);
    assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
    for order in [1, 2] {
        let a = model.derivative(0.0, order);
        let b = model.derivative(1.0 - 1e-15, order);
        for z in 0..2 {
            assert!((a[z] - b[z]).abs() < 1e-9 * a[z].abs().max(1.0));
        }
    }

    // Second derivative is linear on each span, so one-sided second
    // differences extrapolated linearly give the exact one-sided limits.
    let n = model.n();
    let h = 1e-3 / n as f64;
    let sd = |u: f64| {
        let p = evaluate_curve(&model, u - h);
        let c = evaluate_curve(&model, u);
        let q = evaluate_curve(&model, u + h);
        [
            (p[0] - 2.0 * c[0] + q[0]) / (h * h),
            (p[1] - 2.0 * c[1] + q[1]) / (h * h),
        ]
    };
    let scale = (0..n)
        .map(|k| {
            let d = sd(k as f64 / n as f64 + 0.5 / n as f64);
            d[0].hypot(d[1])
        })
        .fold(0.0, f64::max);
    for k in 1..n {
        let u = k as f64 / n as f64;
        let (l1, l2) = (sd(u - 2.0 * h), sd(u - 3.0 * h));
        let (r1, r2) = (sd(u + 2.0 * h), sd(u + 3.0 * h));
        for z in 0..2 {
            let left = 3.0 * l1[z] - 2.0 * l2[z];
            let right = 3.0 * r1[z] - 2.0 * r2[z];
            assert!(
                (left - right).abs() < 1e-6 * scale,
                "knot {k}: {left} vs {right}"
            );
        }
    }
}

#[test]
fn resample_spacing() {
    let model = SplineModel::new(FOREWING_CONTROL_POINTS.to_vec()).unwrap();
    let dense = resample(&model, 1000);
    assert_eq!(dense.len(), 1000);
    for (i, p) in dense.iter().enumerate() {
        assert_eq!(*p, evaluate_curve(&model, i as f64 / 1000.0));
    }
}

#[test]
fn chord_params_examples() {
    let line: Vec<Point> = (0..8).map(|k| [k as f64, 0.0]).collect();
    // the closing segment is 7 long, so the parameters are k / 14
    let t = chord_params(&line).unwrap();
    for (k, v) in t.iter().enumerate() {
        assert!((v - k as f64 / 14.0).abs() < 1e-15);
    }
    let mut bad = circle(10, 1.0);
    bad[4] = bad[3];
    assert!(matches!(
        Contour::new(bad),
        Err(Error::DegenerateSegment { index: 3, next: 4 })
    ));
    assert!(matches!(
        Contour::new(circle(5, 1.0)),
        Err(Error::TooFewPoints { needed: 8, got: 5 })
    ));
}

#[test]
fn fit_error_analytic_cases() {
    let pts = circle(50, 10.0);
    let same = fit_error(&pts, &pts).unwrap();
    assert_eq!(same.rms, 0.0);
    let mut moved = pts.clone();
    let d = 0.01;
    moved[3][0] += d;
    let r = fit_error(&moved, &pts).unwrap();
    assert!((r.rms - d / (50f64).sqrt()).abs() < 1e-12);
    assert!((r.rms - (r.e.iter().map(|v| v * v).sum::<f64>() / 50.0).sqrt()).abs() == 0.0);
}

#[test]
fn exact_spline_samples_are_interpolated() {
    let ctrl: Vec<Point> = circle(8, 5.0)
        .into_iter()
        .enumerate()
        .map(|(i, p)| [p[0] * (1.0 + 0.2 * (i % 3) as f64), p[1]])
        .collect();
    let truth = SplineModel::new(ctrl).unwrap();
    let pts: Vec<Point> = (0..100)
        .map(|j| evaluate_curve(&truth, (10 * j) as f64 / 1000.0))
        .collect();
    let (model, report) = fit_periodic_smoothing_spline(&pts, 0.0).unwrap();
    assert_eq!(report.n_ctrl, 8);
    assert!(report.budget_met);
    assert!(report.rms < 1e-9, "rms {}", report.rms);
    assert_eq!(model.n(), 8);
}

#[test]
fn circle_fit_within_tenth_percent() {
    let r = 1000.0;
    let (_, report) = fit_periodic_smoothing_spline(&circle(100, r), 0.5).unwrap();
    assert!(report.budget_met);
    assert!((report.ssr - report.budget).abs() < 1e-6 * report.budget);
    assert!(report.rms < 1e-3 * r, "rms {} n {}", report.rms, report.n_ctrl);
}

#[test]
fn published_polygon_round_trip() {
    let truth = SplineModel::new(FOREWING_CONTROL_POINTS.to_vec()).unwrap();
    let pts = resample(&truth, 1000);
    let opts = FitOptions {
        alpha: 0.0,
        n_ctrl: Some(22),
        ..FitOptions::default()
    };
    let (model, report) = fit_with(&pts, &opts).unwrap();
    assert!(report.rms < 0.05, "rms {}", report.rms);
    for (a, b) in model.control_points.iter().zip(FOREWING_CONTROL_POINTS) {
        assert!((a[0] - b[0]).abs() < 1e-3 && (a[1] - b[1]).abs() < 1e-3);
    }
}

#[test]
fn smoothing_budget_is_hit_on_noisy_outline() {
    let truth = SplineModel::new(FOREWING_CONTROL_POINTS.to_vec()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<Point> = (0..477)
        .map(|j| {
            let p = evaluate_curve(&truth, j as f64 / 477.0);
            [
                p[0] + rng.random_range(-1.0..1.0),
                p[1] + rng.random_range(-1.0..1.0),
            ]
        })
        .collect();
    let (_, report) = fit_periodic_smoothing_spline(&pts, 0.5).unwrap();
    assert!(report.budget_met);
    assert!((report.ssr - 0.5 * 477.0).abs() < 1e-6 * 0.5 * 477.0);
    assert!(report.rms < 1.5, "rms {}", report.rms);
    assert!(report.p95 >= report.rms * 0.5);
}

#[test]
fn morphometric_table_values() {
    let m = morphometrics(&MorphoConfig::default()).unwrap();
    assert!((m.aspect_ratio / 3.28 - 1.0).abs() < 0.005, "{}", m.aspect_ratio);
    assert!((m.wing_loading / 2.32 - 1.0).abs() < 0.005, "{}", m.wing_loading);
    assert!((m.reynolds / 5600.0 - 1.0).abs() < 0.10, "{}", m.reynolds);
    assert!((m.reduced_frequency - 2.70).abs() < 0.005);
    assert!(m.reduced_frequency > 1.0);
    let cfg = MorphoConfig::default();
    let u = speed_for_reduced_frequency(&cfg, 2.0).unwrap();
    assert!((reduced_frequency(&cfg, u).unwrap() - 2.0).abs() < 1e-12);
    assert!(morphometrics(&MorphoConfig { s: 0.0, ..cfg }).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fit_error_invariant_under_rigid_motion(theta in -3.2f64..3.2, dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
        let model = SplineModel::new(FOREWING_CONTROL_POINTS.to_vec()).unwrap();
        let dense = resample(&model, 300);
        let pts: Vec<Point> = (0..40).map(|j| {
            let p = evaluate_curve(&model, (j as f64 + 0.37) / 40.0);
            [p[0] + 0.3 * (j as f64).sin(), p[1]]
        }).collect();
        let (s, c) = theta.sin_cos();
        let mv = |p: &Point| [c * p[0] - s * p[1] + dx, s * p[0] + c * p[1] + dy];
        let a = fit_error(&pts, &dense).unwrap();
        let b = fit_error(&pts.iter().map(mv).collect::<Vec<_>>(), &dense.iter().map(mv).collect::<Vec<_>>()).unwrap();
        for (x, y) in a.e.iter().zip(&b.e) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn fitted_models_are_closed_and_partitioned(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Point> = (0..60).map(|j| {
            let a = 2.0 * std::f64::consts::PI * j as f64 / 60.0;
            let r = 100.0 + 15.0 * (3.0 * a).cos() + rng.random_range(-0.5..0.5);
            [r * a.cos(), 0.6 * r * a.sin()]
        }).collect();
        let (model, report) = fit_periodic_smoothing_spline(&pts, 0.5).unwrap();
        prop_assert!(report.rms.is_finite());
        let a = evaluate_curve(&model, 0.0);
        let b = evaluate_curve(&model, 1.0);
        prop_assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        let u: f64 = rng.random_range(0.0..1.0);
        let s: f64 = (0..model.n() + 3).map(|i| bspline_basis(i, 3, u, &model.knots)).sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refit_of_resample_keeps_rms(seed in 0u64..1000) {
        // fit, resample densely, refit with the same control count: the error
        // against the original points moves by less than 10 %
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Point> = (0..80).map(|j| {
            let a = 2.0 * std::f64::consts::PI * j as f64 / 80.0;
            let r = 200.0 + 30.0 * (2.0 * a).sin() + rng.random_range(-1.0..1.0);
            [r * a.cos(), r * a.sin()]
        }).collect();
        let (m1, r1) = fit_periodic_smoothing_spline(&pts, 0.5).unwrap();
        let dense = resample(&m1, 1000);
        let (m2, _) = fit_with(&dense, &FitOptions { alpha: 0.0, n_ctrl: Some(m1.n()), ..FitOptions::default() }).unwrap();
        let r2 = fit_error(&pts, &resample(&m2, 1000)).unwrap();
        prop_assert!((r2.rms - r1.rms).abs() < 0.1 * r1.rms, "{} vs {}", r1.rms, r2.rms);
    }
}
