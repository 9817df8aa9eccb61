use std::f64::consts::PI;

use flapping_core::control::{AllocationMode, SignConfig};
use flapping_core::estimation::*;
use flapping_core::plant::*;
use flapping_core::sim::{simulate, ImuNoise, Scenario, SetpointStep};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn madgwick_static_tilt_converges(roll in -40.0f64..40.0, pitch in -40.0f64..40.0) {
        let truth = quat_from_euler(roll, pitch, 0.0);
        let g = truth.conj().rotate([0.0, 0.0, 1.0]);
        let mut q = Quat::default();
        for k in 0..4000 {
            let s = ImuSample { t: k as f64 * 0.01, gyro: [0.0; 3], accel: g };
            q = madgwick_update(q, &s, 0.1, 0.01).unwrap().q;
            prop_assert!((q.norm() - 1.0).abs() < 1e-12);
        }
        // the normalized gradient step leaves a chatter of order beta * dt
        let est = q.conj().rotate([0.0, 0.0, 1.0]);
        let cos = est.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0);
        prop_assert!(cos.acos().to_degrees() < 0.15, "{:?}", euler_from_quat(q));
    }

    #[test]
    fn rls_recovers_sinusoid_and_mean(a in -40.0f64..40.0, b in -40.0f64..40.0, c in -20.0f64..20.0, w in 20.0f64..120.0) {
        let mut st = RlsState::new(0.995, 1e3).unwrap();
        let mut acc = PhaseAccumulator::default();
        for _ in 0..600 {
            let r = adaptive_regressor(&mut acc, w, 0.01);
            let y = a * r[0] + b * r[1] + c;
            rls_update(&mut st, y, r).unwrap();
        }
        // the finite initial covariance leaves a small, decaying prior bias
        prop_assert!((st.mean() - c).abs() < 1e-4);
        prop_assert!((st.w[0] - a).abs() < 1e-4 && (st.w[1] - b).abs() < 1e-4);
        prop_assert!((st.p - st.p.transpose()).abs().max() == 0.0);
    }

    #[test]
    fn torque_free_momentum_is_conserved(zeta in 10.0f64..60.0, f in 5.0f64..15.0, rate in -2.0f64..2.0) {
        prop_assume!(rate.abs() > 1e-3);
        let model = InertiaModel::default();
        let (z, w) = (zeta.to_radians(), 2.0 * PI * f);
        let kin = |t: f64| WingAngles::symmetric(z * (w * t).sin(), z * w * (w * t).cos(), -z * w * w * (w * t).sin());
        let i = |t: f64| inertia_of(&model, &kin(t)).i_yy;
        let mut st = BodyState { theta_dot: rate, ..BodyState::default() };
        let l0 = i(0.0) * rate;
        let dt = 1e-4;
        for k in 0..5000 {
            let t = k as f64 * dt;
            st = dynamics_step(&st, &model, 0.0, t, dt, kin, |_, _, _| ForceTorque::default()).unwrap();
            prop_assert!((i(t + dt) * st.theta_dot - l0).abs() <= 1e-6 * l0.abs());
        }
    }
}

#[test]
fn dead_reckoning_composes_exactly() {
    let rate = [0.4, -1.1, 2.0];
    let mut q = Quat::default();
    for k in 0..500 {
        let s = ImuSample { t: k as f64 * 0.01, gyro: rate, accel: [0.0, 0.0, 1.0] };
        q = madgwick_update(q, &s, 0.0, 0.01).unwrap().q;
    }
    let oracle = Quat::from_rotation_vector([rate[0] * 5.0, rate[1] * 5.0, rate[2] * 5.0]);
    assert!(q.angle_to(oracle) < 1e-10);
}

#[test]
fn inertia_grows_with_flap_angle() {
    let m = InertiaModel::default();
    let mut prev = 0.0;
    for k in 0..=70 {
        let i = inertia_at(&m, (k as f64).to_radians(), 0.0).0;
        assert!(i > prev);
        prev = i;
    }
}

fn pitch_response(mode: AllocationMode, signs: SignConfig, noise: ImuNoise, seed: u64) -> Vec<f64> {
    let mut sc = Scenario::new(mode, 3.0);
    sc.controller.allocation.signs = signs;
    sc.noise = noise;
    sc.seed = seed;
    sc.setpoints = vec![SetpointStep { t: 0.5, pitch_ref: 10.0, yaw_ref: 0.0 }];
    simulate(&sc).unwrap().rows.iter().map(|r| r.tick.pitch_mean).collect()
}

#[test]
fn pitch_step_moves_towards_reference_in_both_modes() {
    for mode in [AllocationMode::Offset, AllocationMode::Timing] {
        let p = pitch_response(mode, SignConfig::default(), ImuNoise::default(), 0);
        assert!(*p.last().unwrap() > 5.0, "{mode:?}: {}", p.last().unwrap());
    }
}

#[test]
fn noisy_runs_are_seed_deterministic() {
    let noise = ImuNoise { gyro_std: 0.02, accel_std: 0.02 };
    let a = pitch_response(AllocationMode::Offset, SignConfig::default(), noise, 11);
    let b = pitch_response(AllocationMode::Offset, SignConfig::default(), noise, 11);
    let c = pitch_response(AllocationMode::Offset, SignConfig::default(), noise, 12);
    assert_eq!(a, b);
    assert_ne!(a, c);
}
