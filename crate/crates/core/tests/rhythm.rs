use std::f64::consts::PI;

use flapping_core::cpg::*;
use flapping_core::star::*;
use flapping_core::Error;
use proptest::prelude::*;

fn base(a: f64) -> WingbeatParams {
    WingbeatParams {
        zeta: 40.0,
        f: 10.0,
        delta: 0.0,
        a,
    }
}

/// Frequency from the first and last crossing of a multiple of 2π.
fn crossing_frequency(omegas: &[f64], dt: f64) -> f64 {
    let mut times = Vec::new();
    let mut next = (omegas[0] / (2.0 * PI)).floor() + 1.0;
    for k in 1..omegas.len() {
        while omegas[k] >= 2.0 * PI * next {
            let frac = (2.0 * PI * next - omegas[k - 1]) / (omegas[k] - omegas[k - 1]);
            times.push((k as f64 - 1.0 + frac) * dt);
            next += 1.0;
        }
    }
    (times.len() - 1) as f64 / (times[times.len() - 1] - times[0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn period_is_one_over_f(f in 1.0f64..40.0, a in -0.45f64..0.45) {
        let p = StarParams::new(f, a).unwrap();
        let t = crossing_time(PhaseState::default(), &p, 2.0 * PI, 1.0 / (f * 4000.0)).unwrap();
        prop_assert!((t * f - 1.0).abs() < 1e-7, "f={f} a={a} t={t}");
    }

    #[test]
    fn half_strokes_partition_the_period(f in 1.0f64..40.0, a in -0.49f64..0.49) {
        let (down, up) = half_stroke_durations(f, a).unwrap();
        prop_assert!(down > 0.0 && up > 0.0);
        prop_assert!((down + up - 1.0 / f).abs() < 1e-12);
        prop_assert_eq!(down > up, a > 0.0);
    }

    #[test]
    fn phase_speed_within_bounds(a in -0.49f64..0.49, w in -10.0f64..10.0) {
        let (lo, hi) = phase_speed_bounds(10.0, a).unwrap();
        let v = phase_rate(&StarParams::new(10.0, a).unwrap(), w, 0.0).unwrap();
        prop_assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn cpg_holds_mean_frequency(a in -0.45f64..0.45) {
        let cfg = SmoothingConfig::from_cutoff(2.0, 100.0).unwrap();
        let p = base(a);
        let mut st = OscState::new(&p).unwrap();
        let mut omegas = vec![st.omega];
        for _ in 0..3000 {
            cpg_step(&mut st, &p, &cfg).unwrap();
            omegas.push(st.omega);
        }
        // the seeded filter state settles to a constant phase offset within a second
        let f = crossing_frequency(&omegas[1000..], 0.01);
        prop_assert!((f / 10.0 - 1.0).abs() < 1e-3, "a={a} f={f}");
    }

    #[test]
    fn cpg_output_stays_in_stroke_envelope(a in -0.45f64..0.45, delta in -30.0f64..30.0, ticks in 1usize..400) {
        let cfg = SmoothingConfig::from_cutoff(2.0, 100.0).unwrap();
        let p = WingbeatParams { delta, ..base(a) };
        let mut st = OscState::new(&base(0.0)).unwrap();
        for _ in 0..ticks {
            let y = cpg_step(&mut st, &p, &cfg).unwrap();
            prop_assert!((y - st.delta).abs() <= p.zeta + 1e-12);
            prop_assert!(st.last_dw > 0.0);
        }
    }

    #[test]
    fn antisymmetric_commands_mirror_the_wings(d in -10.0f64..10.0) {
        let cfg = SmoothingConfig::from_cutoff(2.0, 100.0).unwrap();
        let b = base(0.0);
        let mut st = [OscState::new(&b).unwrap(); 2];
        let anti = Modulation { delta: d, a: 0.0 };
        for _ in 0..50 {
            let out = dual_wing_step(&mut st, Modulation::default(), anti, &b, &cfg, 80.0).unwrap();
            // pure offset difference: same phase, offsets ±d after slew
            prop_assert!(((out.y_l - st[0].delta) - (out.y_r - st[1].delta)).abs() < 1e-12);
            prop_assert!((st[0].delta + st[1].delta).abs() < 1e-12);
        }
    }
}

#[test]
fn filtered_step_is_gentler_than_unfiltered() {
    let jump = |cfg: SmoothingConfig| {
        let mut st = OscState::new(&base(0.0)).unwrap();
        let mut prev = st.y;
        let mut worst: f64 = 0.0;
        for k in 0..300 {
            let y = cpg_step(&mut st, &base(if k >= 50 { 0.4 } else { 0.0 }), &cfg).unwrap();
            if (50..60).contains(&k) {
                worst = worst.max((y - prev).abs());
            }
            prev = y;
        }
        worst
    };
    let smooth = jump(SmoothingConfig::from_cutoff(2.0, 100.0).unwrap());
    let raw = jump(SmoothingConfig::unfiltered(100.0));
    assert!(smooth < raw, "{smooth} vs {raw}");
}

#[test]
fn extended_dynamics_cancel_pulse_residual() {
    let pulse = TrapezoidPulse::over_cycles(0.3, 10.0, 5.0, 1.0);
    let ext = phase_difference_residual(&pulse, 10.0, Variant::Cosine, true, 1e-5, 0.1).unwrap();
    assert!(ext.delta_final.abs() < 1e-9);
    // the trace returns to zero after the pulse but not during it
    let peak = ext.trace.iter().fold(0.0f64, |m, (_, d)| m.max(d.abs()));
    assert!(peak > 0.1);
    let sine = phase_difference_residual(&pulse, 10.0, Variant::Sine, false, 1e-5, 0.1).unwrap();
    assert!(sine.delta_final.abs() > 1e-3);
}

#[test]
fn inadmissible_asymmetry_is_rejected_everywhere() {
    assert!(matches!(StarParams::new(10.0, 0.5), Err(Error::Admissibility { .. })));
    assert!(check_asymmetry(-0.495).is_err());
    let cfg = SmoothingConfig::from_cutoff(2.0, 100.0).unwrap();
    let mut st = OscState::new(&base(0.0)).unwrap();
    let before = st;
    assert!(cpg_step(&mut st, &base(0.6), &cfg).is_err());
    assert_eq!(st, before);
}
