//! Closed- or open-loop flight simulation: the onboard controller runs at the
//! servo rate on synthesized IMU samples while the plant is integrated with
//! RK4 at the physics rate, the wing phase interpolated linearly between ticks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::{AllocationMode, ControlOutput, ControllerConfig, FlightController, Setpoint, TickRecord};
use crate::error::{Error, Result};
use crate::estimation::{quat_from_euler, ImuSample, Quat};
use crate::plant::{
    dynamics_step, ft_map, inertia_of, BodyState, ForceTorque, FtMapConfig, InertiaModel, WingAngles, WingPhase,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub inertia: InertiaModel,
    pub ft: FtMapConfig,
    /// Passive pitch restoring stiffness, N·m/rad.
    pub pitch_stiffness: f64,
    /// Aerodynamic pitch damping, N·m·s/rad.
    pub pitch_damping: f64,
    /// Aerodynamic yaw damping, N·m·s/rad.
    pub yaw_damping: f64,
    /// Linear translational drag, 1/s.
    pub linear_drag: f64,
    pub gravity: f64,
    /// Reaction torque of the accelerating wing masses on the body.
    pub wing_recoil: bool,
    /// Torque from the cycle-varying fore-aft CG under the lift force.
    pub cg_torque: bool,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            inertia: InertiaModel::default(),
            ft: FtMapConfig::default(),
            pitch_stiffness: 6e-4,
            pitch_damping: 2.5e-4,
            yaw_damping: 1e-3,
            linear_drag: 2.0,
            gravity: 9.81,
            wing_recoil: false,
            cg_torque: true,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        self.inertia.validate()?;
        self.ft.validate()?;
        for (name, v) in [
            ("pitch_stiffness", self.pitch_stiffness),
            ("pitch_damping", self.pitch_damping),
            ("yaw_damping", self.yaw_damping),
            ("linear_drag", self.linear_drag),
            ("gravity", self.gravity),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "plant coefficients must be non-negative",
                });
            }
        }
        Ok(())
    }

    /// Applied body-frame load: mapped aerodynamic force/torque plus passive terms.
    pub fn load(&self, st: &BodyState, w: &WingAngles, aero: ForceTorque) -> ForceTorque {
        let mut ft = aero;
        let m = &self.inertia;
        ft.m[1] -= self.pitch_stiffness * st.theta + self.pitch_damping * st.theta_dot;
        ft.m[2] -= self.yaw_damping * st.psi_dot;
        if self.wing_recoil {
            for k in 0..2 {
                let (s, c) = w.phi[k].sin_cos();
                let z_acc = m.r_eff * (c * w.phi_ddot[k] - s * w.phi_dot[k] * w.phi_dot[k]);
                ft.m[1] -= m.m_wing * m.x_w * z_acc;
            }
        }
        if self.cg_torque {
            let x_cg = inertia_of(m, w).x_cg;
            ft.m[1] -= x_cg * aero.f[2];
        }
        // world-frame drag expressed in body axes
        let (bx, bz) = st.axes();
        let d = [-self.linear_drag * m.m_total * st.vel[0], -self.linear_drag * m.m_total * st.vel[1]];
        ft.f[0] += d[0] * bx[0] + d[1] * bx[1];
        ft.f[2] += d[0] * bz[0] + d[1] * bz[1];
        ft
    }
}

/// Step change of setpoints at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetpointStep {
    pub t: f64,
    pub pitch_ref: f64,
    pub yaw_ref: f64,
}

pub fn setpoint_at(schedule: &[SetpointStep], t: f64) -> Setpoint {
    let mut sp = Setpoint::default();
    for s in schedule {
        if s.t <= t {
            sp = Setpoint {
                pitch_ref: s.pitch_ref,
                yaw_ref: s.yaw_ref,
            };
        }
    }
    sp
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuNoise {
    /// rad/s
    pub gyro_std: f64,
    /// g
    pub accel_std: f64,
}

/// Commands applied in open loop from `start` on.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OpenLoopCommand {
    pub start: f64,
    pub delta_sym: f64,
    pub delta_anti: f64,
    pub a_sym: f64,
    pub a_anti: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub physics_dt: f64,
    pub closed_loop: bool,
    pub controller: ControllerConfig,
    pub plant: PlantConfig,
    pub setpoints: Vec<SetpointStep>,
    pub open_loop: OpenLoopCommand,
    pub noise: ImuNoise,
    pub seed: u64,
    /// IMU stops producing fresh samples after this time.
    pub sensor_dropout: Option<f64>,
    pub initial: BodyState,
}

impl Scenario {
    pub fn new(mode: AllocationMode, duration: f64) -> Self {
        Self {
            name: "scenario".into(),
            duration,
            physics_dt: 1e-3,
            closed_loop: true,
            controller: ControllerConfig::for_mode(mode),
            plant: PlantConfig::default(),
            setpoints: Vec::new(),
            open_loop: OpenLoopCommand::default(),
            noise: ImuNoise::default(),
            seed: 0,
            sensor_dropout: None,
            initial: BodyState::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "duration",
                value: self.duration,
                reason: "must be positive",
            });
        }
        let dt_c = 1.0 / self.controller.smoothing.f_servo;
        if !(self.physics_dt > 0.0 && self.physics_dt <= dt_c) {
            return Err(Error::InvalidParameter {
                name: "physics_dt",
                value: self.physics_dt,
                reason: "physics step must be positive and no longer than the control step",
            });
        }
        if !(self.noise.gyro_std >= 0.0 && self.noise.accel_std >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "noise",
                value: self.noise.gyro_std.min(self.noise.accel_std),
                reason: "noise levels must be non-negative",
            });
        }
        self.controller.validate()?;
        self.plant.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub t: f64,
    /// deg
    pub phi_l: f64,
    pub phi_r: f64,
    /// deg, nose-up
    pub theta: f64,
    /// deg/s
    pub theta_dot: f64,
    /// deg
    pub psi: f64,
    pub psi_dot: f64,
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub ft: ForceTorque,
    pub i_yy: f64,
    pub i_dot: f64,
    pub tick: TickRecord,
}

impl SimRow {
    pub fn header() -> Vec<&'static str> {
        let mut h = vec![
            "t", "phi_L", "phi_R", "theta", "theta_dot", "psi", "psi_dot", "x", "z", "vx", "vz", "Fx", "Fy", "Fz",
            "Mx", "My", "Mz", "I_yy", "I_dot",
        ];
        h.extend(TickRecord::HEADER.iter().skip(1).map(|s| match *s {
            "pitch" => "est_pitch",
            "roll" => "est_roll",
            "yaw" => "est_yaw",
            other => other,
        }));
        h
    }

    pub fn row(&self) -> Vec<String> {
        let f = |v: f64| format!("{v:.9}");
        let mut r = vec![
            f(self.t),
            f(self.phi_l),
            f(self.phi_r),
            f(self.theta),
            f(self.theta_dot),
            f(self.psi),
            f(self.psi_dot),
            f(self.pos[0]),
            f(self.pos[1]),
            f(self.vel[0]),
            f(self.vel[1]),
        ];
        r.extend(self.ft.f.iter().chain(&self.ft.m).map(|&v| format!("{v:.12e}")));
        r.push(format!("{:.12e}", self.i_yy));
        r.push(format!("{:.12e}", self.i_dot));
        r.extend(self.tick.row().into_iter().skip(1));
        r
    }
}

#[derive(Debug)]
pub struct SimOutcome {
    pub rows: Vec<SimRow>,
    /// Set when the run aborted; `rows` then holds the partial log.
    pub fault: Option<Error>,
}

/// Body-to-world attitude for nose-up pitch `theta` and left yaw `psi`.
pub fn body_attitude(st: &BodyState) -> Quat {
    quat_from_euler(0.0, -st.theta.to_degrees(), st.psi.to_degrees())
}

#[derive(Debug, Clone, Copy)]
struct WingTick {
    omega0: [f64; 2],
    omega1: [f64; 2],
    delta0: [f64; 2],
    delta1: [f64; 2],
    zeta: f64,
    t0: f64,
    dt: f64,
}

impl WingTick {
    fn at(&self, t: f64) -> (WingAngles, [WingPhase; 2]) {
        let s = ((t - self.t0) / self.dt).clamp(0.0, 1.0);
        let mut w = WingAngles::default();
        let mut ph = [WingPhase::default(); 2];
        let z = self.zeta.to_radians();
        for k in 0..2 {
            let om = self.omega0[k] + s * (self.omega1[k] - self.omega0[k]);
            let om_dot = (self.omega1[k] - self.omega0[k]) / self.dt;
            let d = (self.delta0[k] + s * (self.delta1[k] - self.delta0[k])).to_radians();
            let d_dot = (self.delta1[k] - self.delta0[k]).to_radians() / self.dt;
            let (sn, cs) = om.sin_cos();
            w.phi[k] = z * sn + d;
            w.phi_dot[k] = z * cs * om_dot + d_dot;
            w.phi_ddot[k] = -z * sn * om_dot * om_dot;
            ph[k] = WingPhase {
                omega: om,
                stroke_rate: w.phi_dot[k].to_degrees(),
            };
        }
        (w, ph)
    }
}

pub fn simulate(sc: &Scenario) -> Result<SimOutcome> {
    sc.validate()?;
    let mut fc = FlightController::new(sc.controller)?;
    let plant = sc.plant;
    let dt_c = 1.0 / sc.controller.smoothing.f_servo;
    let n_ticks = (sc.duration / dt_c).round() as usize;
    let n_sub = (dt_c / sc.physics_dt).round().max(1.0) as usize;
    let h = dt_c / n_sub as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let gyro_noise = Normal::new(0.0, sc.noise.gyro_std).map_err(|e| Error::Input(e.to_string()))?;
    let accel_noise = Normal::new(0.0, sc.noise.accel_std).map_err(|e| Error::Input(e.to_string()))?;

    let mut st = sc.initial;
    if plant.wing_recoil {
        // Start with zero total pitch momentum about the body: the wing masses
        // leave phase zero at full stroke speed, so an at-rest body would take
        // the whole recoil impulse as a persistent pitch rate.
        let m = &plant.inertia;
        let z = fc.cfg.base.zeta.to_radians();
        let mut w = WingAngles::default();
        let mut h = 0.0;
        for k in 0..2 {
            let o = &fc.osc[k];
            let rate = std::f64::consts::PI * fc.cfg.base.f * o.r_smooth;
            w.phi[k] = z * o.omega.sin() + o.delta.to_radians();
            w.phi_dot[k] = z * o.omega.cos() * rate;
            h += m.m_wing * m.x_w * m.r_eff * w.phi[k].cos() * w.phi_dot[k];
        }
        st.theta_dot -= h / inertia_of(m, &w).i_yy;
    }
    let mut rows = Vec::with_capacity(n_ticks);
    let mut prev_q = body_attitude(&st);
    let mut last_sample: Option<ImuSample> = None;
    let mut params = [fc.cfg.base; 2];
    let mut wings = WingTick {
        omega0: [fc.osc[0].omega, fc.osc[1].omega],
        omega1: [fc.osc[0].omega, fc.osc[1].omega],
        delta0: [fc.osc[0].delta, fc.osc[1].delta],
        delta1: [fc.osc[0].delta, fc.osc[1].delta],
        zeta: fc.cfg.base.zeta,
        t0: 0.0,
        dt: dt_c,
    };

    for k in 0..n_ticks {
        let t = k as f64 * dt_c;

        // --- sensing at t
        let q = body_attitude(&st);
        let gyro = if k == 0 {
            [st.psi_dot * st.theta.sin(), -st.theta_dot, st.psi_dot * st.theta.cos()]
        } else {
            prev_q.conj().mul(q).to_rotation_vector().map(|v| v / dt_c)
        };
        prev_q = q;
        let (w_now, ph_now) = wings.at(t);
        let aero_now = ft_map(&plant.ft, &params[0], &params[1], ph_now);
        let load_now = plant.load(&st, &w_now, aero_now);
        let g = plant.gravity.max(f64::MIN_POSITIVE);
        let accel = [load_now.f[0] / plant.inertia.m_total / g, 0.0, load_now.f[2] / plant.inertia.m_total / g];
        let mut sample = ImuSample {
            t,
            gyro: [0, 1, 2].map(|i| gyro[i] + gyro_noise.sample(&mut rng)),
            accel: [0, 1, 2].map(|i| accel[i] + accel_noise.sample(&mut rng)),
        };
        if matches!(sc.sensor_dropout, Some(td) if t >= td) {
            if let Some(s) = last_sample {
                sample = s;
            }
        }
        last_sample = Some(sample);

        // --- control tick
        let before = [fc.osc[0], fc.osc[1]];
        let rec = if sc.closed_loop {
            fc.tick(&sample, setpoint_at(&sc.setpoints, t))
        } else {
            let cmd = if t >= sc.open_loop.start {
                ControlOutput {
                    delta_sym: sc.open_loop.delta_sym,
                    delta_anti: sc.open_loop.delta_anti,
                    a_sym: sc.open_loop.a_sym,
                    a_anti: sc.open_loop.a_anti,
                    saturated: false,
                }
            } else {
                ControlOutput::default()
            };
            fc.tick_open(&sample, cmd)
        };
        let rec = match rec {
            Ok(r) => r,
            Err(e) => return Ok(SimOutcome { rows, fault: Some(e) }),
        };
        let inertia = inertia_of(&plant.inertia, &w_now);
        rows.push(SimRow {
            t,
            phi_l: w_now.phi[0].to_degrees(),
            phi_r: w_now.phi[1].to_degrees(),
            theta: st.theta.to_degrees(),
            theta_dot: st.theta_dot.to_degrees(),
            psi: st.psi.to_degrees(),
            psi_dot: st.psi_dot.to_degrees(),
            pos: st.pos,
            vel: st.vel,
            ft: load_now,
            i_yy: inertia.i_yy,
            i_dot: inertia.i_yy_dot,
            tick: rec,
        });

        // --- physics over [t, t + dt_c]
        params = fc.last_params();
        wings = WingTick {
            omega0: [before[0].omega, before[1].omega],
            omega1: [fc.osc[0].omega, fc.osc[1].omega],
            delta0: [before[0].delta, before[1].delta],
            delta1: [fc.osc[0].delta, fc.osc[1].delta],
            zeta: fc.cfg.base.zeta,
            t0: t,
            dt: dt_c,
        };
        for j in 0..n_sub {
            let ts = t + j as f64 * h;
            let step = dynamics_step(
                &st,
                &plant.inertia,
                plant.gravity,
                ts,
                h,
                |tt| wings.at(tt).0,
                |tt, s, w| {
                    let ph = wings.at(tt).1;
                    plant.load(s, w, ft_map(&plant.ft, &params[0], &params[1], ph))
                },
            );
            match step {
                Ok(next) => st = next,
                Err(e) => return Ok(SimOutcome { rows, fault: Some(e) }),
            }
        }
    }
    Ok(SimOutcome { rows, fault: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setpoint_schedule_steps() {
        let s = [
            SetpointStep {
                t: 1.0,
                pitch_ref: 10.0,
                yaw_ref: 0.0,
            },
            SetpointStep {
                t: 2.0,
                pitch_ref: -10.0,
                yaw_ref: 5.0,
            },
        ];
        assert_eq!(setpoint_at(&s, 0.5), Setpoint::default());
        assert_eq!(setpoint_at(&s, 1.5).pitch_ref, 10.0);
        assert_eq!(setpoint_at(&s, 2.0).yaw_ref, 5.0);
    }

    #[test]
    fn hover_is_deterministic() {
        let sc = Scenario::new(AllocationMode::Offset, 0.5);
        let a = simulate(&sc).unwrap();
        let b = simulate(&sc).unwrap();
        assert!(a.fault.is_none());
        assert_eq!(a.rows.len(), 50);
        assert_eq!(a.rows, b.rows);
    }
}
