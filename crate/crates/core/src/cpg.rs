//! Discrete, servo-rate wingbeat oscillator.
//!
//! Each tick advances a reference phase exactly along the drift-compensated
//! STAR invariant `0.5 w + A sin w = pi f t`, converts the increment into a
//! reciprocal-rate target `r = dw / (pi f / f_servo)`, smooths `r` with a
//! first-order IIR and advances the output phase by `(pi f / f_servo) * r`.
//! Smoothing the reciprocal (rather than `p`) keeps the long-run mean of the
//! output rate equal to the mean of the targets, which is what keeps the
//! flapping frequency unbiased while `A` moves.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::star::{check_asymmetry, A_MAX};

pub const DEFAULT_MECH_LIMIT_DEG: f64 = 80.0;
pub const DEFAULT_DELTA_SLEW_DEG_S: f64 = 200.0;
pub const DEFAULT_F_SERVO: f64 = 100.0;

const R_MIN: f64 = 1.0 / (0.5 + A_MAX);
const R_MAX: f64 = 1.0 / (0.5 - A_MAX);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WingbeatParams {
    /// Stroke amplitude, deg.
    pub zeta: f64,
    /// Flapping frequency, Hz.
    pub f: f64,
    /// Stroke offset, deg, positive = upward.
    pub delta: f64,
    /// Stroke-timing asymmetry.
    pub a: f64,
}

impl WingbeatParams {
    pub fn validate(&self, mech_limit: f64) -> Result<()> {
        if !(self.zeta.is_finite() && self.zeta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "zeta",
                value: self.zeta,
                reason: "stroke amplitude must be positive",
            });
        }
        if !(self.f.is_finite() && self.f > 0.0) {
            return Err(Error::InvalidParameter {
                name: "f",
                value: self.f,
                reason: "flapping frequency must be positive",
            });
        }
        check_asymmetry(self.a)?;
        if !(self.delta.is_finite() && self.delta.abs() + self.zeta <= mech_limit) {
            return Err(Error::InvalidParameter {
                name: "delta",
                value: self.delta,
                reason: "|delta| + zeta exceeds the mechanical stroke limit",
            });
        }
        Ok(())
    }
}

/// Which quantity the IIR smooths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterDomain {
    /// Smooth `r = 1/p` and advance by it directly.
    #[default]
    Reciprocal,
    /// Smooth `p` and invert afterwards. Kept as a counterfactual; biased.
    Modulation,
}

/// How the per-tick target is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetRule {
    /// Exact reference-phase increment over the tick, drift-compensated.
    #[default]
    Increment,
    /// `1 / (0.5 + A cos w)` at the current output phase.
    Instantaneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub alpha: f64,
    pub f_servo: f64,
    pub f_c: f64,
    #[serde(default)]
    pub domain: FilterDomain,
    #[serde(default)]
    pub target: TargetRule,
    /// Offset slew limit, deg/s. `None` disables limiting.
    #[serde(default = "default_slew")]
    pub delta_slew: Option<f64>,
}

fn default_slew() -> Option<f64> {
    Some(DEFAULT_DELTA_SLEW_DEG_S)
}

impl SmoothingConfig {
    pub fn from_cutoff(f_c: f64, f_servo: f64) -> Result<Self> {
        Ok(Self {
            alpha: alpha_from_cutoff(f_c, f_servo)?,
            f_servo,
            f_c,
            domain: FilterDomain::Reciprocal,
            target: TargetRule::Increment,
            delta_slew: default_slew(),
        })
    }

    /// `alpha = 1`: the target passes straight through.
    pub fn unfiltered(f_servo: f64) -> Self {
        Self {
            alpha: 1.0,
            f_servo,
            f_c: f_servo / 2.0,
            domain: FilterDomain::Reciprocal,
            target: TargetRule::Increment,
            delta_slew: None,
        }
    }

    /// Checks the IIR weight and that the cutoff sits below the flapping frequency.
    pub fn validate(&self, f: f64) -> Result<()> {
        if !(self.f_servo.is_finite() && self.f_servo > 0.0) {
            return Err(Error::InvalidParameter {
                name: "f_servo",
                value: self.f_servo,
                reason: "servo rate must be positive",
            });
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: self.alpha,
                reason: "IIR weight must lie in (0, 1]",
            });
        }
        if self.alpha < 1.0 && self.f_c >= f {
            return Err(Error::InvalidParameter {
                name: "f_c",
                value: self.f_c,
                reason: "smoothing cutoff must be below the flapping frequency",
            });
        }
        if let Some(s) = self.delta_slew {
            if !(s > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "delta_slew",
                    value: s,
                    reason: "slew limit must be positive",
                });
            }
        }
        Ok(())
    }
}

/// `alpha = 2 pi f_c / f_servo`.
pub fn alpha_from_cutoff(f_c: f64, f_servo: f64) -> Result<f64> {
    if !(f_c.is_finite() && f_c > 0.0) {
        return Err(Error::InvalidParameter {
            name: "f_c",
            value: f_c,
            reason: "cutoff must be positive (alpha = 0 freezes the oscillator)",
        });
    }
    if !(f_servo.is_finite() && f_servo > 2.0 * f_c) {
        return Err(Error::Aliasing {
            cutoff: f_c,
            rate: f_servo,
        });
    }
    let alpha = 2.0 * PI * f_c / f_servo;
    Ok(alpha.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscState {
    /// Output phase, rad (unwrapped).
    pub omega: f64,
    /// Smoothed reciprocal of the modulation function.
    pub r_smooth: f64,
    /// Last stroke angle, deg.
    pub y: f64,
    /// Reference phase advanced along the STAR invariant.
    pub omega_ref: f64,
    /// Asymmetry the reference was last advanced with.
    pub a_ref: f64,
    /// Reciprocal increments withheld by clamping, paid back on later ticks.
    pub debt: f64,
    /// Offset currently applied after slew limiting, deg.
    pub delta: f64,
    /// Output phase increment of the last tick, rad.
    pub last_dw: f64,
}

impl OscState {
    /// Phase at zero with `r_smooth` seeded to the exact `1/p(A, 0)`.
    pub fn new(params: &WingbeatParams) -> Result<Self> {
        check_asymmetry(params.a)?;
        let r = 1.0 / (0.5 + params.a);
        Ok(Self {
            omega: 0.0,
            r_smooth: r,
            y: params.delta,
            omega_ref: 0.0,
            a_ref: params.a,
            debt: 0.0,
            delta: params.delta,
            last_dw: 0.0,
        })
    }

    /// Output phase rate implied by the last tick, rad/s.
    pub fn phase_rate(&self, f_servo: f64) -> f64 {
        self.last_dw * f_servo
    }
}

/// Solves `0.5 w + a sin w = j` (strictly increasing in `w` for |a| < 0.5).
fn invert_invariant(a: f64, j: f64, guess: f64) -> f64 {
    let g = |w: f64| 0.5 * w + a * w.sin() - j;
    let (mut lo, mut hi) = (2.0 * (j - a.abs()), 2.0 * (j + a.abs()));
    let mut w = guess.clamp(lo, hi);
    for _ in 0..100 {
        let v = g(w);
        if v == 0.0 {
            return w;
        }
        if v < 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        let step = v / (0.5 + a * w.cos());
        let mut next = w - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - w).abs() <= 1e-15 * w.abs().max(1.0) {
            return next;
        }
        w = next;
    }
    w
}

/// One servo tick. Validates before touching `state`.
pub fn cpg_step(state: &mut OscState, params: &WingbeatParams, cfg: &SmoothingConfig) -> Result<f64> {
    check_asymmetry(params.a)?;
    if !(params.f.is_finite() && params.f > 0.0 && params.zeta.is_finite() && params.delta.is_finite()) {
        return Err(Error::NonFinite("wingbeat parameters"));
    }
    let c = PI * params.f / cfg.f_servo;

    let target = match cfg.target {
        TargetRule::Increment => {
            let j = 0.5 * state.omega_ref + state.a_ref * state.omega_ref.sin() + c;
            let guess = state.omega_ref + c / (0.5 + params.a * state.omega_ref.cos());
            let w_new = invert_invariant(params.a, j, guess);
            let raw = (w_new - state.omega_ref) / c + state.debt;
            state.omega_ref = w_new;
            state.a_ref = params.a;
            let clamped = raw.clamp(R_MIN, R_MAX);
            state.debt = raw - clamped;
            clamped
        }
        TargetRule::Instantaneous => 1.0 / (0.5 + params.a * state.omega.cos()),
    };

    let alpha = cfg.alpha;
    state.r_smooth = match cfg.domain {
        FilterDomain::Reciprocal => alpha * target + (1.0 - alpha) * state.r_smooth,
        FilterDomain::Modulation => 1.0 / (alpha / target + (1.0 - alpha) / state.r_smooth),
    };
    let dw = c * state.r_smooth;
    state.omega += dw;
    state.last_dw = dw;

    state.delta = match cfg.delta_slew {
        Some(rate) => {
            let max_step = rate / cfg.f_servo;
            state.delta + (params.delta - state.delta).clamp(-max_step, max_step)
        }
        None => params.delta,
    };
    state.y = params.zeta * state.omega.sin() + state.delta;
    Ok(state.y)
}

/// Symmetric/antisymmetric modulation pair, `(delta deg, A)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Modulation {
    pub delta: f64,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualOutput {
    pub y_l: f64,
    pub y_r: f64,
    pub params_l: WingbeatParams,
    pub params_r: WingbeatParams,
    pub saturated_l: bool,
    pub saturated_r: bool,
}

fn compose(base: &WingbeatParams, delta: f64, a: f64, mech_limit: f64) -> (WingbeatParams, bool) {
    let d_lim = (mech_limit - base.zeta).max(0.0);
    let d = delta.clamp(-d_lim, d_lim);
    let a_c = a.clamp(-A_MAX, A_MAX);
    let sat = d != delta || a_c != a;
    (
        WingbeatParams {
            delta: d,
            a: a_c,
            ..*base
        },
        sat,
    )
}

/// Composes per-wing commands from the symmetric and antisymmetric channels
/// (`x_L = sym + anti`, `x_R = sym - anti`), clamps them, and steps both
/// oscillators on the same tick. `sym.delta` is added to `base.delta`.
pub fn dual_wing_step(
    states: &mut [OscState; 2],
    sym: Modulation,
    anti: Modulation,
    base: &WingbeatParams,
    cfg: &SmoothingConfig,
    mech_limit: f64,
) -> Result<DualOutput> {
    if ![sym.delta, sym.a, anti.delta, anti.a].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("modulation command"));
    }
    let (pl, sl) = compose(base, base.delta + sym.delta + anti.delta, sym.a + anti.a, mech_limit);
    let (pr, sr) = compose(base, base.delta + sym.delta - anti.delta, sym.a - anti.a, mech_limit);
    let mut next = *states;
    let y_l = cpg_step(&mut next[0], &pl, cfg)?;
    let y_r = cpg_step(&mut next[1], &pr, cfg)?;
    *states = next;
    Ok(DualOutput {
        y_l,
        y_r,
        params_l: pl,
        params_r: pr,
        saturated_l: sl,
        saturated_r: sr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoCalib {
    pub center_us: f64,
    pub us_per_deg: f64,
    pub min_us: f64,
    pub max_us: f64,
}

impl Default for ServoCalib {
    fn default() -> Self {
        Self {
            center_us: 1500.0,
            us_per_deg: 10.0,
            min_us: 900.0,
            max_us: 2100.0,
        }
    }
}

/// Pulse width in µs and whether it was clamped.
pub fn servo_pwm(y: f64, calib: &ServoCalib) -> (f64, bool) {
    let raw = calib.center_us + y * calib.us_per_deg;
    let pulse = raw.clamp(calib.min_us, calib.max_us);
    (pulse, pulse != raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(a: f64) -> WingbeatParams {
        WingbeatParams {
            zeta: 40.0,
            f: 10.0,
            delta: 0.0,
            a,
        }
    }

    #[test]
    fn alpha_rule() {
        assert!((alpha_from_cutoff(2.0, 100.0).unwrap() - 0.12566).abs() < 1e-5);
        assert!((alpha_from_cutoff(2.0, 1000.0).unwrap() - 0.012566).abs() < 1e-6);
        assert!(alpha_from_cutoff(0.0, 100.0).is_err());
        assert!(matches!(alpha_from_cutoff(50.0, 100.0), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn invariant_inversion() {
        for &a in &[-0.49, -0.2, 0.0, 0.3, 0.49] {
            for &j in &[-3.0, 0.0, 0.7, 12.5] {
                let w = invert_invariant(a, j, 0.0);
                assert!((0.5 * w + a * w.sin() - j).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_rate_is_exact() {
        let p = base(0.0);
        let cfg = SmoothingConfig::from_cutoff(2.0, 100.0).unwrap();
        let mut s = OscState::new(&p).unwrap();
        for _ in 0..50 {
            cpg_step(&mut s, &p, &cfg).unwrap();
            assert!((s.last_dw - 2.0 * PI * 10.0 / 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inadmissible_leaves_state() {
        let cfg = SmoothingConfig::from_cutoff(2.0, 100.0).unwrap();
        let mut s = OscState::new(&base(0.1)).unwrap();
        let before = s;
        assert!(cpg_step(&mut s, &base(0.6), &cfg).is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn offset_slew_is_limited() {
        let cfg = SmoothingConfig::from_cutoff(2.0, 100.0).unwrap();
        let mut s = OscState::new(&base(0.0)).unwrap();
        let mut p = base(0.0);
        p.delta = 10.0;
        cpg_step(&mut s, &p, &cfg).unwrap();
        assert!((s.delta - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dual_symmetry_and_offset() {
        let cfg = SmoothingConfig::from_cutoff(2.0, 100.0).unwrap();
        let b = base(0.0);
        let mut st = [OscState::new(&b).unwrap(); 2];
        for _ in 0..20 {
            let o = dual_wing_step(&mut st, Modulation::default(), Modulation::default(), &b, &cfg, 80.0).unwrap();
            assert_eq!(o.y_l, o.y_r);
        }
        let anti = Modulation { delta: 5.0, a: 0.0 };
        let mut last = None;
        for _ in 0..100 {
            last = Some(dual_wing_step(&mut st, Modulation::default(), anti, &b, &cfg, 80.0).unwrap());
        }
        let o = last.unwrap();
        assert!((o.y_l - o.y_r - 10.0).abs() < 1e-9);
    }

    #[test]
    fn dual_clamps_and_flags() {
        let cfg = SmoothingConfig::from_cutoff(2.0, 100.0).unwrap();
        let b = base(0.0);
        let mut st = [OscState::new(&b).unwrap(); 2];
        let o = dual_wing_step(
            &mut st,
            Modulation { delta: 0.0, a: 0.3 },
            Modulation { delta: 0.0, a: 0.3 },
            &b,
            &cfg,
            80.0,
        )
        .unwrap();
        assert!(o.saturated_l && !o.saturated_r);
        assert_eq!(o.params_l.a, A_MAX);
    }

    #[test]
    fn pwm() {
        let c = ServoCalib::default();
        assert_eq!(servo_pwm(0.0, &c), (1500.0, false));
        assert_eq!(servo_pwm(45.0, &c), (1950.0, false));
        assert_eq!(servo_pwm(90.0, &c), (2100.0, true));
    }
}
