//! PID attitude loops, channel allocation and the per-tick controller pipeline.

use serde::{Deserialize, Serialize};

use crate::cpg::{
    dual_wing_step, servo_pwm, Modulation, OscState, ServoCalib, SmoothingConfig, WingbeatParams,
    DEFAULT_MECH_LIMIT_DEG,
};
use crate::error::{Error, Result};
use crate::estimation::{
    adaptive_regressor, euler_from_quat, madgwick_update, rls_update, ImuSample, PhaseAccumulator,
    Quat, RlsState, DEFAULT_BETA, DEFAULT_LAMBDA, DEFAULT_P0,
};
use crate::star::A_MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub i_limit: f64,
    pub out_limit: f64,
}

impl PidGains {
    pub const PITCH_OFFSET: PidGains = PidGains::new(0.6, 0.45, 0.05);
    pub const PITCH_TIMING: PidGains = PidGains::new(0.6, 0.7, 0.07);
    pub const YAW_OFFSET: PidGains = PidGains::new(0.15, 0.0, 0.0);
    pub const YAW_TIMING: PidGains = PidGains::new(0.17, 0.0, 0.0);

    /// Limits default to 40 (integral, deg·s) and 30 (output).
    pub const fn new(kp: f64, ki: f64, kd: f64) -> Self {
        Self {
            kp,
            ki,
            kd,
            i_limit: 40.0,
            out_limit: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "gains must be non-negative",
                });
            }
        }
        for (name, v) in [("i_limit", self.i_limit), ("out_limit", self.out_limit)] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "limits must be positive",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    pub integral: f64,
    pub prev_err: Option<f64>,
}

pub fn pid_step(gains: &PidGains, state: &mut PidState, err: f64, dt: f64) -> f64 {
    let prev = state.prev_err.unwrap_or(err);
    state.integral = (state.integral + err * dt).clamp(-gains.i_limit, gains.i_limit);
    let d = if dt > 0.0 { (err - prev) / dt } else { 0.0 };
    state.prev_err = Some(err);
    let u = gains.kp * err + gains.ki * state.integral + gains.kd * d;
    u.clamp(-gains.out_limit, gains.out_limit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationMode {
    #[default]
    Offset,
    Timing,
}

/// Channel signs, each +1 or -1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignConfig {
    /// Offset-mode pitch: +1 lowers both wings for a nose-up demand.
    pub pitch: f64,
    /// Timing-mode pitch: +1 raises A_sym for a nose-up demand.
    pub pitch_a: f64,
    /// Offset-mode yaw: +1 means a left-turn demand raises the left wing.
    pub yaw: f64,
    /// Timing-mode yaw: -1 means a left-turn demand gives the right wing the
    /// faster downstroke.
    pub yaw_a: f64,
}

impl Default for SignConfig {
    fn default() -> Self {
        Self {
            pitch: 1.0,
            pitch_a: 1.0,
            yaw: 1.0,
            yaw_a: -1.0,
        }
    }
}

impl SignConfig {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("pitch", self.pitch),
            ("pitch_a", self.pitch_a),
            ("yaw", self.yaw),
            ("yaw_a", self.yaw_a),
        ] {
            if v != 1.0 && v != -1.0 {
                return Err(Error::SignConstraint(format!("sign_config.{k} = {v} must be +1 or -1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationConfig {
    /// deg per unit of pitch command.
    pub k_p2delta: f64,
    /// deg per unit of yaw command.
    pub k_y2delta: f64,
    /// A per unit of pitch command.
    pub k_p2a: f64,
    /// A per unit of yaw command.
    pub k_y2a: f64,
    /// Timing-mode trim.
    pub a0: f64,
    pub delta_sym_limit: f64,
    pub delta_anti_limit: f64,
    pub a_sym_limit: f64,
    pub a_anti_limit: f64,
    pub signs: SignConfig,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        Self {
            k_p2delta: 1.0,
            k_y2delta: 1.0,
            k_p2a: 0.05,
            k_y2a: 0.05,
            a0: 0.0,
            delta_sym_limit: 20.0,
            delta_anti_limit: 15.0,
            a_sym_limit: 0.2,
            a_anti_limit: 0.25,
            signs: SignConfig::default(),
        }
    }
}

impl AllocationConfig {
    pub fn validate(&self) -> Result<()> {
        self.signs.validate()?;
        if self.a0.abs() + self.a_sym_limit + self.a_anti_limit > A_MAX {
            return Err(Error::Admissibility {
                a: self.a0.abs() + self.a_sym_limit + self.a_anti_limit,
                limit: A_MAX,
            });
        }
        for (name, v) in [
            ("delta_sym_limit", self.delta_sym_limit),
            ("delta_anti_limit", self.delta_anti_limit),
            ("a_sym_limit", self.a_sym_limit),
            ("a_anti_limit", self.a_anti_limit),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "allocation limits must be positive",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlOutput {
    pub delta_sym: f64,
    pub delta_anti: f64,
    pub a_sym: f64,
    pub a_anti: f64,
    pub saturated: bool,
}

fn clamp_flag(v: f64, lim: f64, flag: &mut bool) -> f64 {
    let c = v.clamp(-lim, lim);
    *flag |= c != v;
    c
}

pub fn allocate(mode: AllocationMode, cfg: &AllocationConfig, u_pitch: f64, u_yaw: f64) -> ControlOutput {
    let mut sat = false;
    let s = &cfg.signs;
    match mode {
        AllocationMode::Offset => ControlOutput {
            delta_sym: clamp_flag(-s.pitch * cfg.k_p2delta * u_pitch, cfg.delta_sym_limit, &mut sat),
            delta_anti: clamp_flag(s.yaw * cfg.k_y2delta * u_yaw, cfg.delta_anti_limit, &mut sat),
            a_sym: cfg.a0,
            a_anti: 0.0,
            saturated: sat,
        },
        AllocationMode::Timing => ControlOutput {
            delta_sym: 0.0,
            delta_anti: 0.0,
            a_sym: cfg.a0 + clamp_flag(s.pitch_a * cfg.k_p2a * u_pitch, cfg.a_sym_limit, &mut sat),
            a_anti: clamp_flag(s.yaw_a * cfg.k_y2a * u_yaw, cfg.a_anti_limit, &mut sat),
            saturated: sat,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Setpoint {
    /// Nose-up pitch reference, deg.
    pub pitch_ref: f64,
    /// Yaw reference, deg (positive = left turn).
    pub yaw_ref: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub mode: AllocationMode,
    pub pitch_gains: PidGains,
    pub yaw_gains: PidGains,
    pub allocation: AllocationConfig,
    pub base: WingbeatParams,
    pub smoothing: SmoothingConfig,
    pub mech_limit: f64,
    pub beta: f64,
    pub lambda: f64,
    pub p0: f64,
    pub servo: ServoCalib,
}

impl ControllerConfig {
    /// Paper gains for the chosen mode; everything else at defaults.
    pub fn for_mode(mode: AllocationMode) -> Self {
        let (pitch_gains, yaw_gains) = match mode {
            AllocationMode::Offset => (PidGains::PITCH_OFFSET, PidGains::YAW_OFFSET),
            AllocationMode::Timing => (PidGains::PITCH_TIMING, PidGains::YAW_TIMING),
        };
        Self {
            mode,
            pitch_gains,
            yaw_gains,
            allocation: AllocationConfig::default(),
            base: WingbeatParams {
                zeta: 40.0,
                f: 10.0,
                delta: 0.0,
                a: 0.0,
            },
            smoothing: SmoothingConfig::from_cutoff(2.0, 100.0).expect("default cutoff is valid"),
            mech_limit: DEFAULT_MECH_LIMIT_DEG,
            beta: DEFAULT_BETA,
            lambda: DEFAULT_LAMBDA,
            p0: DEFAULT_P0,
            servo: ServoCalib::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pitch_gains.validate()?;
        self.yaw_gains.validate()?;
        self.allocation.validate()?;
        self.base.validate(self.mech_limit)?;
        self.smoothing.validate(self.base.f)?;
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: self.beta,
                reason: "gain must be non-negative",
            });
        }
        RlsState::new(self.lambda, self.p0)?;
        Ok(())
    }
}

pub mod flags {
    pub const SAT_L: u32 = 1;
    pub const SAT_R: u32 = 1 << 1;
    pub const ALLOC_SAT: u32 = 1 << 2;
    pub const STALE: u32 = 1 << 3;
    pub const ACCEL_SKIPPED: u32 = 1 << 4;
    pub const GIMBAL: u32 = 1 << 5;
    pub const PWM_SAT: u32 = 1 << 6;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub roll: f64,
    /// Nose-up pitch, deg.
    pub pitch: f64,
    pub yaw: f64,
    pub pitch_mean: f64,
    pub u_pitch: f64,
    pub u_yaw: f64,
    pub out: ControlOutput,
    pub y_l: f64,
    pub y_r: f64,
    pub pwm_l: f64,
    pub pwm_r: f64,
    pub flags: u32,
}

impl TickRecord {
    pub const HEADER: [&'static str; 17] = [
        "t", "roll", "pitch", "yaw", "pitch_mean", "u_pitch", "u_yaw", "delta_sym", "delta_anti",
        "A_sym", "A_anti", "y_L", "y_R", "pwm_L", "pwm_R", "flags", "fault",
    ];

    pub fn row(&self) -> Vec<String> {
        let f = |v: f64| format!("{v:.9}");
        vec![
            f(self.t),
            f(self.roll),
            f(self.pitch),
            f(self.yaw),
            f(self.pitch_mean),
            f(self.u_pitch),
            f(self.u_yaw),
            f(self.out.delta_sym),
            f(self.out.delta_anti),
            f(self.out.a_sym),
            f(self.out.a_anti),
            f(self.y_l),
            f(self.y_r),
            f(self.pwm_l),
            f(self.pwm_r),
            self.flags.to_string(),
            u8::from(self.flags & flags::STALE != 0).to_string(),
        ]
    }
}

fn wrap_deg(a: f64) -> f64 {
    let r = (a + 180.0).rem_euclid(360.0) - 180.0;
    if r == -180.0 {
        180.0
    } else {
        r
    }
}

/// The onboard loop: estimation, PID, allocation and both oscillators.
#[derive(Debug, Clone)]
pub struct FlightController {
    pub cfg: ControllerConfig,
    pub q: Quat,
    pub rls: RlsState,
    pub acc: PhaseAccumulator,
    pub pitch_pid: PidState,
    pub yaw_pid: PidState,
    pub osc: [OscState; 2],
    last_t: Option<f64>,
    held: (f64, f64, ControlOutput),
    params: [WingbeatParams; 2],
}

#[derive(Debug, Clone, Copy)]
enum Command {
    Track(Setpoint),
    Fixed(ControlOutput),
}

impl FlightController {
    pub fn new(cfg: ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        let osc = OscState::new(&WingbeatParams {
            a: cfg.base.a + cfg.allocation.a0,
            ..cfg.base
        })?;
        let neutral = allocate(cfg.mode, &cfg.allocation, 0.0, 0.0);
        Ok(Self {
            rls: RlsState::new(cfg.lambda, cfg.p0)?,
            q: Quat::IDENTITY,
            acc: PhaseAccumulator::default(),
            pitch_pid: PidState::default(),
            yaw_pid: PidState::default(),
            osc: [osc; 2],
            last_t: None,
            held: (0.0, 0.0, neutral),
            params: [cfg.base; 2],
            cfg,
        })
    }

    /// Mean phase rate of both wings over the last tick, rad/s.
    pub fn wing_phase_rate(&self) -> f64 {
        0.5 * (self.osc[0].phase_rate(self.cfg.smoothing.f_servo) + self.osc[1].phase_rate(self.cfg.smoothing.f_servo))
    }

    /// Per-wing parameters used on the last tick.
    pub fn last_params(&self) -> [WingbeatParams; 2] {
        self.params
    }

    pub fn tick(&mut self, sample: &ImuSample, sp: Setpoint) -> Result<TickRecord> {
        self.step(sample, Command::Track(sp))
    }

    /// Runs estimation as usual but applies `cmd` instead of the PID outputs.
    pub fn tick_open(&mut self, sample: &ImuSample, cmd: ControlOutput) -> Result<TickRecord> {
        self.step(sample, Command::Fixed(cmd))
    }

    fn step(&mut self, sample: &ImuSample, cmd: Command) -> Result<TickRecord> {
        let dt_nom = 1.0 / self.cfg.smoothing.f_servo;
        let stale = matches!(self.last_t, Some(t) if !(sample.t > t)) || !sample.is_finite();
        let mut fl = 0u32;
        let (u_pitch, u_yaw, out);
        if stale {
            fl |= flags::STALE;
            (u_pitch, u_yaw, out) = self.held;
        } else {
            let dt = self.last_t.map_or(dt_nom, |t| sample.t - t);
            self.last_t = Some(sample.t);
            let m = madgwick_update(self.q, sample, self.cfg.beta, dt)?;
            self.q = m.q;
            if m.accel_skipped {
                fl |= flags::ACCEL_SKIPPED;
            }
            let omega_inst = if self.osc[0].last_dw == 0.0 {
                2.0 * std::f64::consts::PI * self.cfg.base.f
            } else {
                self.wing_phase_rate()
            };
            let reg = adaptive_regressor(&mut self.acc, omega_inst, dt);
            let e = euler_from_quat(self.q);
            if e.gimbal {
                fl |= flags::GIMBAL;
            }
            let c = rls_update(&mut self.rls, -e.pitch, reg)?;
            let (up, uy, o) = match cmd {
                Command::Track(sp) => {
                    let up = pid_step(&self.cfg.pitch_gains, &mut self.pitch_pid, sp.pitch_ref - c, dt);
                    let uy = pid_step(&self.cfg.yaw_gains, &mut self.yaw_pid, wrap_deg(sp.yaw_ref - e.yaw), dt);
                    (up, uy, allocate(self.cfg.mode, &self.cfg.allocation, up, uy))
                }
                Command::Fixed(o) => (0.0, 0.0, o),
            };
            self.held = (up, uy, o);
            (u_pitch, u_yaw, out) = (up, uy, o);
        }
        if out.saturated {
            fl |= flags::ALLOC_SAT;
        }
        let dual = dual_wing_step(
            &mut self.osc,
            Modulation {
                delta: out.delta_sym,
                a: out.a_sym,
            },
            Modulation {
                delta: out.delta_anti,
                a: out.a_anti,
            },
            &self.cfg.base,
            &self.cfg.smoothing,
            self.cfg.mech_limit,
        )?;
        self.params = [dual.params_l, dual.params_r];
        if dual.saturated_l {
            fl |= flags::SAT_L;
        }
        if dual.saturated_r {
            fl |= flags::SAT_R;
        }
        let (pwm_l, sl) = servo_pwm(dual.y_l, &self.cfg.servo);
        let (pwm_r, sr) = servo_pwm(dual.y_r, &self.cfg.servo);
        if sl || sr {
            fl |= flags::PWM_SAT;
        }
        let e = euler_from_quat(self.q);
        Ok(TickRecord {
            t: sample.t,
            roll: e.roll,
            pitch: -e.pitch,
            yaw: e.yaw,
            pitch_mean: self.rls.mean(),
            u_pitch,
            u_yaw,
            out,
            y_l: dual.y_l,
            y_r: dual.y_r,
            pwm_l,
            pwm_r,
            flags: fl,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pid_examples() {
        let g = PidGains::PITCH_OFFSET;
        let mut s = PidState::default();
        assert_eq!(pid_step(&g, &mut s, 0.0, 0.01), 0.0);
        let mut s = PidState::default();
        assert!((pid_step(&g, &mut s, 1.0, 0.01) - 0.6045).abs() < 1e-12);
        let mut s = PidState::default();
        let mut u = 0.0;
        for _ in 0..10_000 {
            u = pid_step(&g, &mut s, 100.0, 0.01);
        }
        assert_eq!(s.integral, g.i_limit);
        assert_eq!(u, g.out_limit);
    }

    #[test]
    fn allocation_signs_and_separation() {
        let c = AllocationConfig::default();
        let n = allocate(AllocationMode::Offset, &c, 0.0, 0.0);
        assert_eq!((n.delta_sym, n.delta_anti, n.a_sym, n.a_anti), (0.0, 0.0, 0.0, 0.0));
        let o = allocate(AllocationMode::Offset, &c, 2.0, 3.0);
        assert!(o.delta_sym < 0.0 && o.a_sym == c.a0 && o.a_anti == 0.0);
        let t = allocate(AllocationMode::Timing, &c, 2.0, 3.0);
        assert!(t.a_sym > c.a0 && t.delta_sym == 0.0 && t.delta_anti == 0.0);
        assert!(t.a_anti < 0.0);
    }

    #[test]
    fn sign_validation() {
        let mut s = SignConfig::default();
        s.yaw = 0.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn stale_sample_holds_commands() {
        let mut fc = FlightController::new(ControllerConfig::for_mode(AllocationMode::Offset)).unwrap();
        let mut s = ImuSample {
            t: 0.01,
            gyro: [0.0, -0.2, 0.0],
            accel: [0.0, 0.0, 1.0],
        };
        let mut last = fc.tick(&s, Setpoint::default()).unwrap();
        for k in 2..50 {
            s.t = k as f64 * 0.01;
            last = fc.tick(&s, Setpoint::default()).unwrap();
        }
        let frozen = fc.tick(&s, Setpoint { pitch_ref: 30.0, yaw_ref: 0.0 }).unwrap();
        assert!(frozen.flags & flags::STALE != 0);
        assert_eq!(frozen.out, last.out);
        assert_ne!(frozen.y_l, last.y_l);
    }

    #[test]
    fn wrap() {
        assert_eq!(wrap_deg(190.0), -170.0);
        assert_eq!(wrap_deg(-180.0), 180.0);
        assert_eq!(wrap_deg(30.0), 30.0);
    }
}
