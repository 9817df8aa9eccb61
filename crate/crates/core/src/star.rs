//! Continuous-time stroke-timing rhythm generator.
//!
//! The phase `omega` advances at `pi f / p(omega)` with `p = 0.5 + A cos(omega)`.
//! The phase origin sits at mid-downstroke, so the downstroke spans
//! `omega in [-pi/2, pi/2]` and the upstroke `[pi/2, 3 pi/2]`.
//!
//! A constant `A` skews the time spent in each half-stroke without changing the
//! cycle period `1/f`. The drift-compensated ("extended") dynamics add a
//! `-A_dot sin(omega)` term to the numerator so that
//! `0.5 omega + A sin(omega) = pi f t` holds exactly while `A` varies.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard limit on |A|. The open bound 0.5 makes `p` vanish.
pub const A_MAX: f64 = 0.49;

/// Downstroke phase window, shared with every module that labels half-strokes.
pub const DOWNSTROKE: (f64, f64) = (-FRAC_PI_2, FRAC_PI_2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Cosine,
    /// Only used to compare phase-difference residuals against the cosine form.
    Sine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarParams {
    /// Flapping frequency, Hz.
    pub f: f64,
    /// Stroke-timing asymmetry.
    pub a: f64,
    #[serde(default)]
    pub variant: Variant,
    /// Drift-compensated phase dynamics.
    #[serde(default)]
    pub extended: bool,
}

impl StarParams {
    pub fn new(f: f64, a: f64) -> Result<Self> {
        let params = Self {
            f,
            a,
            variant: Variant::Cosine,
            extended: false,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_extended(mut self, extended: bool) -> Self {
        self.extended = extended;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f.is_finite() && self.f > 0.0) {
            return Err(Error::InvalidParameter {
                name: "f",
                value: self.f,
                reason: "flapping frequency must be positive",
            });
        }
        check_asymmetry(self.a)
    }
}

/// Accepts |A| <= [`A_MAX`].
pub fn check_asymmetry(a: f64) -> Result<()> {
    if a.is_finite() && a.abs() <= A_MAX {
        Ok(())
    } else {
        Err(Error::Admissibility { a, limit: A_MAX })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseState {
    /// Unwrapped phase, rad.
    pub omega: f64,
    /// Time, s.
    pub t: f64,
}

/// `p(omega)`; rejects |A| >= 0.5.
pub fn modulation_fn(a: f64, omega: f64, variant: Variant) -> Result<f64> {
    if !(a.is_finite() && a.abs() < 0.5) {
        return Err(Error::Admissibility { a, limit: 0.5 });
    }
    Ok(match variant {
        Variant::Cosine => 0.5 + a * omega.cos(),
        Variant::Sine => 0.5 + a * omega.sin(),
    })
}

/// Phase speed in rad/s. `a_dot` only enters when `params.extended` is set.
pub fn phase_rate(params: &StarParams, omega: f64, a_dot: f64) -> Result<f64> {
    let p = modulation_fn(params.a, omega, params.variant)?;
    let base = PI * params.f;
    if !params.extended {
        return Ok(base / p);
    }
    if !a_dot.is_finite() {
        return Err(Error::NonFinite("asymmetry rate"));
    }
    // d/dt [0.5 w + A sin w] = pi f for cosine; d/dt [0.5 w - A cos w] = pi f for sine.
    let numerator = match params.variant {
        Variant::Cosine => base - a_dot * omega.sin(),
        Variant::Sine => base + a_dot * omega.cos(),
    };
    if numerator <= 0.0 {
        return Err(Error::RateTooFast {
            t: f64::NAN,
            numerator,
        });
    }
    Ok(numerator / p)
}

/// Time-indexed STAR parameters.
pub trait Schedule {
    fn params_at(&self, t: f64) -> StarParams;

    /// dA/dt at `t`; only consulted by the extended dynamics.
    fn asym_rate(&self, _t: f64) -> f64 {
        0.0
    }

    /// Times where A(t) is not smooth. Integration restarts on these.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl Schedule for StarParams {
    fn params_at(&self, _t: f64) -> StarParams {
        *self
    }
}

fn rate_at<S: Schedule + ?Sized>(sched: &S, t: f64, omega: f64) -> Result<f64> {
    let params = sched.params_at(t);
    if check_asymmetry(params.a).is_err() {
        return Err(Error::InadmissibleAt { a: params.a, t });
    }
    phase_rate(&params, omega, sched.asym_rate(t)).map_err(|e| match e {
        Error::RateTooFast { numerator, .. } => Error::RateTooFast { t, numerator },
        other => other,
    })
}

/// One classical RK4 step. Stage times are clamped into `window` so that a
/// piecewise schedule is always sampled on the piece the step belongs to.
fn rk4_step<S: Schedule + ?Sized>(
    sched: &S,
    t: f64,
    omega: f64,
    h: f64,
    window: (f64, f64),
) -> Result<f64> {
    let at = |tau: f64| tau.clamp(window.0, window.1);
    let k1 = rate_at(sched, at(t), omega)?;
    let k2 = rate_at(sched, at(t + 0.5 * h), omega + 0.5 * h * k1)?;
    let k3 = rate_at(sched, at(t + 0.5 * h), omega + 0.5 * h * k2)?;
    let k4 = rate_at(sched, at(t + h), omega + h * k3)?;
    Ok(omega + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

fn interior(a: f64, b: f64) -> (f64, f64) {
    let eps = 1e-9 * (b - a).abs().max(f64::MIN_POSITIVE);
    (a + eps, b - eps)
}

/// Fixed-step RK4 advance of `steps` steps of size `dt`.
pub fn integrate_phase<S: Schedule + ?Sized>(
    state: PhaseState,
    sched: &S,
    dt: f64,
    steps: usize,
) -> Result<PhaseState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            value: dt,
            reason: "step must be positive",
        });
    }
    let mut omega = state.omega;
    for k in 0..steps {
        let t = state.t + k as f64 * dt;
        omega = rk4_step(sched, t, omega, dt, (f64::NEG_INFINITY, f64::INFINITY))?;
    }
    Ok(PhaseState {
        omega,
        t: state.t + steps as f64 * dt,
    })
}

/// Segment `[t0, t1]` at the schedule's breakpoints and step each piece with
/// the largest step not exceeding `dt` that divides it evenly. Calls
/// `visit(t, omega)` after every step.
pub fn integrate_until<S, F>(
    state: PhaseState,
    sched: &S,
    t_end: f64,
    dt: f64,
    mut visit: F,
) -> Result<PhaseState>
where
    S: Schedule + ?Sized,
    F: FnMut(f64, f64),
{
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            value: dt,
            reason: "step must be positive",
        });
    }
    let mut cuts: Vec<f64> = sched
        .breakpoints()
        .into_iter()
        .filter(|&b| b > state.t && b < t_end)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.push(t_end);

    let mut t0 = state.t;
    let mut omega = state.omega;
    for t1 in cuts {
        let span = t1 - t0;
        if span <= 0.0 {
            continue;
        }
        let n = (span / dt).ceil().max(1.0) as usize;
        let h = span / n as f64;
        let window = interior(t0, t1);
        for k in 0..n {
            let t = t0 + k as f64 * h;
            omega = rk4_step(sched, t, omega, h, window)?;
            visit(t + h, omega);
        }
        t0 = t1;
    }
    Ok(PhaseState { omega, t: t_end })
}

/// Time at which the phase first reaches `target`, starting from `state`.
/// Fixed RK4 steps of `dt`, then the last partial step is solved for exactly.
pub fn crossing_time<S: Schedule + ?Sized>(
    state: PhaseState,
    sched: &S,
    target: f64,
    dt: f64,
) -> Result<f64> {
    if target <= state.omega {
        return Ok(state.t);
    }
    let window = (f64::NEG_INFINITY, f64::INFINITY);
    let mut t = state.t;
    let mut omega = state.omega;
    loop {
        let next = rk4_step(sched, t, omega, dt, window)?;
        if next >= target {
            // The RK4 update is smooth and increasing in the step size here,
            // so bisection followed by a couple of secant refinements is safe.
            let (mut lo, mut hi) = (0.0, dt);
            let (mut f_lo, mut f_hi) = (omega - target, next - target);
            for _ in 0..60 {
                let h = if f_hi != f_lo {
                    (lo - f_lo * (hi - lo) / (f_hi - f_lo)).clamp(lo, hi)
                } else {
                    0.5 * (lo + hi)
                };
                let h = if h <= lo || h >= hi { 0.5 * (lo + hi) } else { h };
                let v = rk4_step(sched, t, omega, h, window)? - target;
                if v == 0.0 || (hi - lo) < 1e-18 {
                    return Ok(t + h);
                }
                if v < 0.0 {
                    lo = h;
                    f_lo = v;
                } else {
                    hi = h;
                    f_hi = v;
                }
            }
            return Ok(t + 0.5 * (lo + hi));
        }
        omega = next;
        t += dt;
        if !t.is_finite() {
            return Err(Error::IntegrationFault {
                t,
                what: "phase never reached target",
            });
        }
    }
}

/// Closed-form half-stroke durations `(T_down, T_up)` in seconds.
pub fn half_stroke_durations(f: f64, a: f64) -> Result<(f64, f64)> {
    StarParams::new(f, a)?;
    let half = 1.0 / (2.0 * f);
    let skew = 2.0 * a / (PI * f);
    Ok((half + skew, half - skew))
}

/// Bounds `(min, max)` of the phase speed for constant A, rad/s.
pub fn phase_speed_bounds(f: f64, a: f64) -> Result<(f64, f64)> {
    StarParams::new(f, a)?;
    Ok((PI * f / (0.5 + a.abs()), PI * f / (0.5 - a.abs())))
}

/// Time profile of the asymmetry applied to the left wing; the right wing
/// receives the negated profile.
pub trait AsymmetryProfile {
    fn value(&self, t: f64) -> f64;
    fn rate(&self, t: f64) -> f64;
    fn breakpoints(&self) -> Vec<f64>;
    /// Time after which the profile is identically zero.
    fn end(&self) -> f64;
}

/// Zero, linear ramp up, hold, linear ramp down, zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapezoidPulse {
    pub peak: f64,
    pub start: f64,
    pub ramp: f64,
    pub hold: f64,
}

impl TrapezoidPulse {
    /// Pulse lasting `cycles` flapping periods, split one ramp cycle, `cycles - 2`
    /// hold cycles and one ramp cycle, starting after `lead` periods.
    pub fn over_cycles(peak: f64, f: f64, cycles: f64, lead: f64) -> Self {
        let period = 1.0 / f;
        let ramp = period.min(0.5 * cycles * period);
        Self {
            peak,
            start: lead * period,
            ramp,
            hold: (cycles * period - 2.0 * ramp).max(0.0),
        }
    }

    fn knots(&self) -> [f64; 4] {
        let a = self.start;
        let b = a + self.ramp;
        let c = b + self.hold;
        [a, b, c, c + self.ramp]
    }
}

impl AsymmetryProfile for TrapezoidPulse {
    fn value(&self, t: f64) -> f64 {
        let [a, b, c, d] = self.knots();
        if t <= a || t >= d {
            0.0
        } else if t < b {
            self.peak * (t - a) / self.ramp
        } else if t <= c {
            self.peak
        } else {
            self.peak * (d - t) / self.ramp
        }
    }

    fn rate(&self, t: f64) -> f64 {
        let [a, b, c, d] = self.knots();
        if t <= a || t >= d || (t >= b && t <= c) {
            0.0
        } else if t < b {
            self.peak / self.ramp
        } else {
            -self.peak / self.ramp
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.knots().to_vec()
    }

    fn end(&self) -> f64 {
        self.knots()[3]
    }
}

/// Identically zero profile.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoPulse;

impl AsymmetryProfile for NoPulse {
    fn value(&self, _t: f64) -> f64 {
        0.0
    }
    fn rate(&self, _t: f64) -> f64 {
        0.0
    }
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
    fn end(&self) -> f64 {
        0.0
    }
}

struct ProfileSchedule<'a, P: ?Sized> {
    profile: &'a P,
    sign: f64,
    f: f64,
    variant: Variant,
    extended: bool,
}

impl<P: AsymmetryProfile + ?Sized> Schedule for ProfileSchedule<'_, P> {
    fn params_at(&self, t: f64) -> StarParams {
        StarParams {
            f: self.f,
            a: self.sign * self.profile.value(t),
            variant: self.variant,
            extended: self.extended,
        }
    }
    fn asym_rate(&self, t: f64) -> f64 {
        self.sign * self.profile.rate(t)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.profile.breakpoints()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTrace {
    /// `omega_L - omega_R` at the end of the run, rad.
    pub delta_final: f64,
    /// `(t, delta)` after every step.
    pub trace: Vec<(f64, f64)>,
}

/// Integrates two phases from zero, the left one under `+A(t)` and the right one
/// under `-A(t)`, until `tail` seconds after the profile ends.
pub fn phase_difference_residual<P: AsymmetryProfile + ?Sized>(
    profile: &P,
    f: f64,
    variant: Variant,
    extended: bool,
    dt: f64,
    tail: f64,
) -> Result<ResidualTrace> {
    let mk = |sign| ProfileSchedule {
        profile,
        sign,
        f,
        variant,
        extended,
    };
    let left = mk(1.0);
    let right = mk(-1.0);
    let t_end = profile.end() + tail.max(0.0);
    let mut left_trace = Vec::new();
    let mut right_trace = Vec::new();
    let l = integrate_until(PhaseState::default(), &left, t_end, dt, |t, w| {
        left_trace.push((t, w))
    })?;
    let r = integrate_until(PhaseState::default(), &right, t_end, dt, |_, w| {
        right_trace.push(w)
    })?;
    let trace = left_trace
        .into_iter()
        .zip(right_trace)
        .map(|((t, wl), wr)| (t, wl - wr))
        .collect();
    Ok(ResidualTrace {
        delta_final: l.omega - r.omega,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub omega: f64,
    pub omega_dot: f64,
    pub p: f64,
}

/// Samples the trajectory of a schedule every step, starting with the initial state.
pub fn trajectory<S: Schedule + ?Sized>(
    state: PhaseState,
    sched: &S,
    t_end: f64,
    dt: f64,
) -> Result<Vec<TrajectorySample>> {
    let sample = |t: f64, omega: f64| -> Result<TrajectorySample> {
        let params = sched.params_at(t);
        Ok(TrajectorySample {
            t,
            omega,
            omega_dot: rate_at(sched, t, omega)?,
            p: modulation_fn(params.a, omega, params.variant)?,
        })
    };
    let mut out = vec![sample(state.t, state.omega)?];
    let mut fault = None;
    integrate_until(state, sched, t_end, dt, |t, w| {
        if fault.is_none() {
            match sample(t, w) {
                Ok(s) => out.push(s),
                Err(e) => fault = Some(e),
            }
        }
    })?;
    match fault {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn modulation_examples() {
        assert_eq!(modulation_fn(0.0, 1.234, Variant::Cosine).unwrap(), 0.5);
        assert!((modulation_fn(0.3, 0.0, Variant::Cosine).unwrap() - 0.8).abs() < 1e-15);
        let p = modulation_fn(0.49, PI, Variant::Cosine).unwrap();
        assert!((p - 0.01).abs() < 1e-12 && p > 0.0);
        assert!(matches!(
            modulation_fn(0.5, 0.0, Variant::Cosine),
            Err(Error::Admissibility { .. })
        ));
        assert!(modulation_fn(-0.7, 0.0, Variant::Sine).is_err());
    }

    #[test]
    fn phase_rate_examples() {
        let p0 = StarParams::new(10.0, 0.0).unwrap();
        for w in [0.0, 1.0, 4.0] {
            assert!((phase_rate(&p0, w, 0.0).unwrap() - 62.83185307179586).abs() < 1e-9);
        }
        let p3 = StarParams::new(10.0, 0.3).unwrap();
        assert!((phase_rate(&p3, 0.0, 0.0).unwrap() - 39.269908169872416).abs() < 1e-9);
        let ext = p0.with_extended(true);
        let r = phase_rate(&ext, FRAC_PI_2, 1.0).unwrap();
        assert!((r - (PI * 10.0 - 1.0) / 0.5).abs() < 1e-9);
        assert!((r - 60.832).abs() < 1e-3);
    }

    #[test]
    fn extended_rejects_non_positive_numerator() {
        let ext = StarParams::new(1.0, 0.0).unwrap().with_extended(true);
        let err = phase_rate(&ext, FRAC_PI_2, 10.0).unwrap_err();
        assert!(matches!(err, Error::RateTooFast { .. }));
    }

    #[test]
    fn constant_rate_cycle() {
        let params = StarParams::new(10.0, 0.0).unwrap();
        let end = integrate_phase(PhaseState::default(), &params, 1e-3, 100).unwrap();
        assert!((end.omega - TAU).abs() < 1e-9);
        assert!((end.t - 0.1).abs() < 1e-12);
    }

    #[test]
    fn half_strokes_closed_form() {
        let (d, u) = half_stroke_durations(10.0, 0.0).unwrap();
        assert_eq!((d, u), (0.05, 0.05));
        let (d, u) = half_stroke_durations(10.0, 0.3).unwrap();
        assert!((d - 0.069099).abs() < 1e-6 && (u - 0.030901).abs() < 1e-6);
        let (dm, um) = half_stroke_durations(10.0, -0.3).unwrap();
        assert_eq!((dm, um), (u, d));
        assert!(half_stroke_durations(10.0, 0.495).is_err());
    }

    #[test]
    fn bounds_examples() {
        let (lo, hi) = phase_speed_bounds(10.0, 0.0).unwrap();
        assert!((lo - 62.832).abs() < 1e-3 && (hi - 62.832).abs() < 1e-3);
        let (lo, hi) = phase_speed_bounds(10.0, 0.3).unwrap();
        assert!((lo - 39.270).abs() < 1e-3 && (hi - 157.080).abs() < 1e-3);
        let (lo, hi) = phase_speed_bounds(10.0, 0.49).unwrap();
        assert!((lo - 31.733).abs() < 1e-3 && (hi - 3141.59).abs() < 1e-2);
    }

    #[test]
    fn inadmissible_schedule_reports_time() {
        struct Ramp;
        impl Schedule for Ramp {
            fn params_at(&self, t: f64) -> StarParams {
                StarParams {
                    f: 10.0,
                    a: t,
                    variant: Variant::Cosine,
                    extended: false,
                }
            }
        }
        let err = integrate_phase(PhaseState::default(), &Ramp, 1e-3, 1000).unwrap_err();
        match err {
            Error::InadmissibleAt { t, a } => {
                assert!(a > A_MAX);
                assert!((t - 0.49).abs() < 2e-3, "t = {t}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_pulse_gives_zero_difference() {
        let r = phase_difference_residual(&NoPulse, 10.0, Variant::Cosine, true, 1e-4, 0.3).unwrap();
        assert_eq!(r.delta_final, 0.0);
        assert!(r.trace.iter().all(|&(_, d)| d == 0.0));
    }

    #[test]
    fn trapezoid_shape() {
        let p = TrapezoidPulse::over_cycles(0.3, 10.0, 5.0, 1.0);
        assert_eq!(p.value(0.05), 0.0);
        assert!((p.value(0.15) - 0.15).abs() < 1e-12);
        assert_eq!(p.value(0.3), 0.3);
        assert!((p.end() - 0.6).abs() < 1e-12);
        assert!((p.rate(0.15) - 3.0).abs() < 1e-12);
        assert!((p.rate(0.55) + 3.0).abs() < 1e-12);
    }
}
