//! Reduced flight plant: body pitch and yaw with flap-angle-dependent inertia,
//! planar (x, z) point-mass translation, and a sign-constrained affine
//! force/torque map.
//!
//! Pitch obeys `d(I_yy theta_dot)/dt = M_y`, i.e.
//! `theta_ddot = (M_y - I_dot theta_dot) / I_yy`; yaw likewise with `I_zz`.
//! `theta` is nose-up positive, `psi` is positive to the left (about +z up).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cpg::WingbeatParams;
use crate::error::{Error, Result};

/// Wind-tunnel anchors kept for reference only: peak lift at 40 deg and weight, N.
pub const DOC_PEAK_LIFT_N: f64 = 0.292;
pub const DOC_WEIGHT_N: f64 = 0.26;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertiaModel {
    pub i_body_yy: f64,
    pub i_body_zz: f64,
    /// Per wing, kg.
    pub m_wing: f64,
    pub r_eff: f64,
    pub x_w: f64,
    pub kappa_x: f64,
    pub m_total: f64,
    pub body_length: f64,
}

/// Targets the default inertia model is solved from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertiaCalibration {
    /// I_yy(phi_max) / I_yy(0).
    pub ratio: f64,
    pub phi_max_deg: f64,
    /// Peak fore-aft CG shift as a fraction of body length.
    pub cg_fraction: f64,
    /// Peak vertical CG excursion in multiples of `core_height`.
    pub z_multiple: f64,
    pub core_height: f64,
    pub body_length: f64,
    pub m_total: f64,
    pub m_wing: f64,
    pub x_w: f64,
    pub i_body_zz: f64,
}

impl Default for InertiaCalibration {
    fn default() -> Self {
        Self {
            ratio: 2.5,
            phi_max_deg: 70.0,
            cg_fraction: 0.03,
            z_multiple: 2.0,
            core_height: 0.018,
            body_length: 0.1,
            m_total: 0.026,
            m_wing: 0.005,
            x_w: 0.02,
            i_body_zz: 8e-5,
        }
    }
}

impl InertiaModel {
    pub fn calibrated(c: &InertiaCalibration) -> Result<Self> {
        let s = c.phi_max_deg.to_radians().sin();
        if !(c.ratio > 1.0 && s > 0.0 && c.m_wing > 0.0 && c.m_total > 2.0 * c.m_wing) {
            return Err(Error::InvalidParameter {
                name: "calibration",
                value: c.ratio,
                reason: "needs ratio > 1, phi_max in (0, 180) deg and m_total > 2 m_wing",
            });
        }
        let r_eff = c.z_multiple * c.core_height * c.m_total / (2.0 * c.m_wing * s);
        let base = 2.0 * c.m_wing * r_eff * r_eff * s * s / (c.ratio - 1.0);
        let i_body_yy = base - 2.0 * c.m_wing * c.x_w * c.x_w;
        let model = Self {
            i_body_yy,
            i_body_zz: c.i_body_zz,
            m_wing: c.m_wing,
            r_eff,
            x_w: c.x_w,
            kappa_x: c.cg_fraction * c.body_length / s,
            m_total: c.m_total,
            body_length: c.body_length,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("i_body_yy", self.i_body_yy),
            ("i_body_zz", self.i_body_zz),
            ("m_wing", self.m_wing),
            ("r_eff", self.r_eff),
            ("x_w", self.x_w),
            ("kappa_x", self.kappa_x),
            ("m_total", self.m_total),
            ("body_length", self.body_length),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "inertia model quantities must be positive",
                });
            }
        }
        Ok(())
    }
}

impl Default for InertiaModel {
    fn default() -> Self {
        Self::calibrated(&InertiaCalibration::default()).expect("default calibration is valid")
    }
}

/// Both wings at the same angle: `(I_yy, dI_yy/dt)`.
pub fn inertia_at(model: &InertiaModel, phi: f64, phi_dot: f64) -> (f64, f64) {
    let m = model;
    let s = phi.sin();
    (
        m.i_body_yy + 2.0 * m.m_wing * (m.x_w * m.x_w + m.r_eff * m.r_eff * s * s),
        2.0 * m.m_wing * m.r_eff * m.r_eff * (2.0 * phi).sin() * phi_dot,
    )
}

/// Both wings at the same angle: `(x_cg, z_cg)`.
pub fn cg_at(model: &InertiaModel, phi: f64) -> (f64, f64) {
    let s = phi.sin();
    (model.kappa_x * s, 2.0 * model.m_wing * model.r_eff * s / model.m_total)
}

/// Left/right flap angles and their derivatives, rad.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WingAngles {
    pub phi: [f64; 2],
    pub phi_dot: [f64; 2],
    pub phi_ddot: [f64; 2],
}

impl WingAngles {
    pub fn symmetric(phi: f64, phi_dot: f64, phi_ddot: f64) -> Self {
        Self {
            phi: [phi; 2],
            phi_dot: [phi_dot; 2],
            phi_ddot: [phi_ddot; 2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertiaState {
    pub i_yy: f64,
    pub i_yy_dot: f64,
    pub i_zz: f64,
    pub i_zz_dot: f64,
    pub x_cg: f64,
    pub z_cg: f64,
}

/// Per-wing generalisation of [`inertia_at`] and [`cg_at`].
pub fn inertia_of(model: &InertiaModel, w: &WingAngles) -> InertiaState {
    let m = model;
    let r2 = m.r_eff * m.r_eff;
    let mut st = InertiaState {
        i_yy: m.i_body_yy,
        i_yy_dot: 0.0,
        i_zz: m.i_body_zz,
        i_zz_dot: 0.0,
        x_cg: 0.0,
        z_cg: 0.0,
    };
    for k in 0..2 {
        let (s, c) = w.phi[k].sin_cos();
        let s2 = (2.0 * w.phi[k]).sin() * w.phi_dot[k];
        st.i_yy += m.m_wing * (m.x_w * m.x_w + r2 * s * s);
        st.i_yy_dot += m.m_wing * r2 * s2;
        st.i_zz += m.m_wing * (m.x_w * m.x_w + r2 * c * c);
        st.i_zz_dot -= m.m_wing * r2 * s2;
        st.x_cg += 0.5 * m.kappa_x * s;
        st.z_cg += m.m_wing * m.r_eff * s / m.m_total;
    }
    st
}

/// Body-frame force (x forward, y left, z up), N, and moments, N·m, ordered
/// (roll, pitch nose-up, yaw left).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceTorque {
    pub f: [f64; 3],
    pub m: [f64; 3],
}

impl ForceTorque {
    pub fn scaled(self, s: f64) -> Self {
        Self {
            f: self.f.map(|v| v * s),
            m: self.m.map(|v| v * s),
        }
    }

    pub fn add(self, o: ForceTorque) -> Self {
        let mut r = self;
        for i in 0..3 {
            r.f[i] += o.f[i];
            r.m[i] += o.m[i];
        }
        r
    }

    pub fn is_finite(&self) -> bool {
        self.f.iter().chain(&self.m).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FtMapConfig {
    pub f_x0: f64,
    pub f_z0: f64,
    /// Reference amplitude, deg, and frequency, Hz, at which the baseline holds.
    pub zeta0: f64,
    pub f0: f64,
    /// Neutral symmetric offset, deg.
    pub delta_ref: f64,
    pub c_fx_zeta: f64,
    pub c_fz_zeta: f64,
    pub c_fx_f: f64,
    pub c_fz_f: f64,
    /// N·m/deg, negative: raising both wings pitches nose-down.
    pub c_my_delta: f64,
    /// N·m per unit A, positive: longer downstrokes pitch nose-up.
    pub c_my_a: f64,
    /// N·m/deg, positive: left-up/right-down turns left.
    pub c_mz_delta_anti: f64,
    /// N·m per unit A, negative: left-faster-downstroke turns right.
    pub c_mz_a_anti: f64,
    pub c_mx_delta_anti: f64,
    pub c_mx_a_anti: f64,
    /// Instantaneous weighting is `|stroke_rate|^shape_exponent`.
    pub shape_exponent: f64,
}

impl Default for FtMapConfig {
    fn default() -> Self {
        Self {
            f_x0: 0.0,
            f_z0: 0.026 * 9.81,
            zeta0: 40.0,
            f0: 10.0,
            delta_ref: 0.0,
            c_fx_zeta: 2e-3,
            c_fz_zeta: 5e-3,
            c_fx_f: 5e-3,
            c_fz_f: 2e-2,
            c_my_delta: -2.5e-5,
            c_my_a: 1e-3,
            c_mz_delta_anti: 3.9e-5,
            c_mz_a_anti: -6.8e-4,
            c_mx_delta_anti: 2e-5,
            c_mx_a_anti: 3e-4,
            shape_exponent: 2.0,
        }
    }
}

impl FtMapConfig {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, f64, bool); 10] = [
            ("c_fx_zeta > 0", self.c_fx_zeta, self.c_fx_zeta > 0.0),
            ("c_fx_f > 0", self.c_fx_f, self.c_fx_f > 0.0),
            ("c_fz_zeta >= 0", self.c_fz_zeta, self.c_fz_zeta >= 0.0),
            ("c_fz_f >= 0", self.c_fz_f, self.c_fz_f >= 0.0),
            ("c_my_delta < 0", self.c_my_delta, self.c_my_delta < 0.0),
            ("c_my_a > 0", self.c_my_a, self.c_my_a > 0.0),
            ("c_mz_delta_anti > 0", self.c_mz_delta_anti, self.c_mz_delta_anti > 0.0),
            ("c_mz_a_anti < 0", self.c_mz_a_anti, self.c_mz_a_anti < 0.0),
            ("c_mx_delta_anti > 0", self.c_mx_delta_anti, self.c_mx_delta_anti > 0.0),
            ("c_mx_a_anti > 0", self.c_mx_a_anti, self.c_mx_a_anti > 0.0),
        ];
        for (rule, v, ok) in checks {
            if !ok || !v.is_finite() {
                return Err(Error::SignConstraint(format!("{rule} required, got {v}")));
            }
        }
        if !(self.shape_exponent > 0.0 && self.shape_exponent.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "shape_exponent",
                value: self.shape_exponent,
                reason: "must be positive",
            });
        }
        Ok(())
    }
}

/// Cycle-mean force and torque, affine in the modulation channels.
pub fn cycle_mean(cfg: &FtMapConfig, l: &WingbeatParams, r: &WingbeatParams) -> ForceTorque {
    let d_zeta = 0.5 * (l.zeta + r.zeta) - cfg.zeta0;
    let d_f = 0.5 * (l.f + r.f) - cfg.f0;
    let delta_sym = 0.5 * (l.delta + r.delta) - cfg.delta_ref;
    let delta_anti = 0.5 * (l.delta - r.delta);
    let a_sym = 0.5 * (l.a + r.a);
    let a_anti = 0.5 * (l.a - r.a);
    ForceTorque {
        f: [
            cfg.f_x0 + cfg.c_fx_zeta * d_zeta + cfg.c_fx_f * d_f,
            0.0,
            cfg.f_z0 + cfg.c_fz_zeta * d_zeta + cfg.c_fz_f * d_f,
        ],
        m: [
            cfg.c_mx_delta_anti * delta_anti + cfg.c_mx_a_anti * a_anti,
            cfg.c_my_delta * delta_sym + cfg.c_my_a * a_sym,
            cfg.c_mz_delta_anti * delta_anti + cfg.c_mz_a_anti * a_anti,
        ],
    }
}

/// Cycle time-average of `|stroke_rate|^n` for `y = zeta sin(w) + delta`
/// driven by constant-A phase dynamics, in (deg/s)^n.
pub fn stroke_rate_norm(p: &WingbeatParams, n: f64) -> f64 {
    let (a, b) = (0.5, p.a);
    if n == 2.0 {
        // f * zeta^2 * pi f * \int cos^2 w / (a + b cos w) dw
        let s = (a * a - b * b).sqrt();
        return p.f * p.zeta * p.zeta * PI * p.f * 2.0 * PI * a / (s * (a + s));
    }
    stroke_rate_norm_quad(p, n)
}

fn stroke_rate_norm_quad(p: &WingbeatParams, n: f64) -> f64 {
    let (a, b) = (0.5, p.a);
    // periodic trapezoid converges geometrically for this smooth integrand
    let k = 2048;
    let h = 2.0 * PI / k as f64;
    let mut acc = 0.0;
    for i in 0..k {
        let w = i as f64 * h;
        let rate = PI * p.f / (a + b * w.cos());
        acc += (p.zeta * w.cos()).abs().powf(n) * rate.powf(n - 1.0);
    }
    p.f * acc * h
}

/// Per-wing instantaneous phase input to [`ft_map`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WingPhase {
    pub omega: f64,
    /// deg/s
    pub stroke_rate: f64,
}

/// Cycle mean distributed over the stroke in proportion to `|stroke_rate|^n`,
/// normalized per wing so that the cycle average is exactly the mean.
pub fn ft_map(cfg: &FtMapConfig, l: &WingbeatParams, r: &WingbeatParams, phase: [WingPhase; 2]) -> ForceTorque {
    let mean = cycle_mean(cfg, l, r);
    let n = cfg.shape_exponent;
    let weight = |p: &WingbeatParams, ph: &WingPhase| {
        let norm = stroke_rate_norm(p, n);
        if norm > 0.0 {
            ph.stroke_rate.abs().powf(n) / norm
        } else {
            1.0
        }
    };
    mean.scaled(0.5 * (weight(l, &phase[0]) + weight(r, &phase[1])))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub theta: f64,
    pub theta_dot: f64,
    pub psi: f64,
    pub psi_dot: f64,
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

impl Default for BodyState {
    fn default() -> Self {
        Self {
            theta: 0.0,
            theta_dot: 0.0,
            psi: 0.0,
            psi_dot: 0.0,
            pos: [0.0; 2],
            vel: [0.0; 2],
        }
    }
}

impl BodyState {
    fn to_vec(self) -> [f64; 8] {
        [
            self.theta,
            self.theta_dot,
            self.psi,
            self.psi_dot,
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
        ]
    }

    fn from_vec(v: [f64; 8]) -> Self {
        Self {
            theta: v[0],
            theta_dot: v[1],
            psi: v[2],
            psi_dot: v[3],
            pos: [v[4], v[5]],
            vel: [v[6], v[7]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }

    /// Body x and z axes expressed in the world (x, z) plane.
    pub fn axes(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.theta.sin_cos();
        ([c, s], [-s, c])
    }
}

fn derivative<K, L>(
    model: &InertiaModel,
    gravity: f64,
    t: f64,
    y: [f64; 8],
    kin: &K,
    load: &L,
) -> [f64; 8]
where
    K: Fn(f64) -> WingAngles,
    L: Fn(f64, &BodyState, &WingAngles) -> ForceTorque,
{
    let st = BodyState::from_vec(y);
    let w = kin(t);
    let inertia = inertia_of(model, &w);
    let ft = load(t, &st, &w);
    let (bx, bz) = st.axes();
    let m = model.m_total;
    [
        st.theta_dot,
        (ft.m[1] - inertia.i_yy_dot * st.theta_dot) / inertia.i_yy,
        st.psi_dot,
        (ft.m[2] - inertia.i_zz_dot * st.psi_dot) / inertia.i_zz,
        st.vel[0],
        st.vel[1],
        (ft.f[0] * bx[0] + ft.f[2] * bz[0]) / m,
        (ft.f[0] * bx[1] + ft.f[2] * bz[1]) / m - gravity,
    ]
}

/// One RK4 step from `t` to `t + dt`. `kin` supplies the flap angles over the
/// step; `load` the applied body-frame force/torque (may depend on the state).
pub fn dynamics_step<K, L>(
    state: &BodyState,
    model: &InertiaModel,
    gravity: f64,
    t: f64,
    dt: f64,
    kin: K,
    load: L,
) -> Result<BodyState>
where
    K: Fn(f64) -> WingAngles,
    L: Fn(f64, &BodyState, &WingAngles) -> ForceTorque,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            value: dt,
            reason: "step must be positive",
        });
    }
    let y0 = state.to_vec();
    let f = |tt: f64, y: [f64; 8]| derivative(model, gravity, tt, y, &kin, &load);
    let add = |y: [f64; 8], k: [f64; 8], h: f64| {
        let mut o = y;
        for i in 0..8 {
            o[i] += h * k[i];
        }
        o
    };
    let k1 = f(t, y0);
    let k2 = f(t + 0.5 * dt, add(y0, k1, 0.5 * dt));
    let k3 = f(t + 0.5 * dt, add(y0, k2, 0.5 * dt));
    let k4 = f(t + dt, add(y0, k3, dt));
    let mut y = y0;
    for i in 0..8 {
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let next = BodyState::from_vec(y);
    if !next.is_finite() {
        return Err(Error::IntegrationFault {
            t: t + dt,
            what: "non-finite body state",
        });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wing(delta: f64, a: f64) -> WingbeatParams {
        WingbeatParams {
            zeta: 40.0,
            f: 10.0,
            delta,
            a,
        }
    }

    #[test]
    fn inertia_signs() {
        let m = InertiaModel::default();
        let (i0, d0) = inertia_at(&m, 0.0, 3.0);
        assert_eq!(d0, 0.0);
        for k in 1..90 {
            let (i, _) = inertia_at(&m, (k as f64).to_radians(), 0.0);
            assert!(i > i0);
        }
        assert!(inertia_at(&m, 0.4, 1.0).1 > 0.0);
        // retraction towards 0 from below: phi < 0, phi_dot > 0
        assert!(inertia_at(&m, -0.4, 1.0).1 < 0.0);
    }

    #[test]
    fn per_wing_matches_symmetric() {
        let m = InertiaModel::default();
        let w = WingAngles::symmetric(0.7, 2.0, 0.0);
        let s = inertia_of(&m, &w);
        let (i, d) = inertia_at(&m, 0.7, 2.0);
        let (x, z) = cg_at(&m, 0.7);
        assert!((s.i_yy - i).abs() < 1e-18 && (s.i_yy_dot - d).abs() < 1e-18);
        assert!((s.x_cg - x).abs() < 1e-15 && (s.z_cg - z).abs() < 1e-15);
    }

    #[test]
    fn cg_is_odd() {
        let m = InertiaModel::default();
        assert_eq!(cg_at(&m, 0.0), (0.0, 0.0));
        let (a, b) = cg_at(&m, 0.9);
        let (c, d) = cg_at(&m, -0.9);
        assert_eq!((a, b), (-c, -d));
    }

    #[test]
    fn neutral_map_has_no_moment() {
        let cfg = FtMapConfig::default();
        let ft = cycle_mean(&cfg, &wing(0.0, 0.0), &wing(0.0, 0.0));
        assert_eq!(ft.m, [0.0; 3]);
        assert!((ft.f[2] - cfg.f_z0).abs() < 1e-15);
        let up = cycle_mean(&cfg, &wing(5.0, 0.0), &wing(5.0, 0.0));
        assert!(up.m[1] < 0.0);
    }

    #[test]
    fn closed_form_norm_matches_quadrature() {
        for a in [-0.45, -0.2, 0.0, 0.3, 0.49] {
            let p = wing(0.0, a);
            let exact = stroke_rate_norm(&p, 2.0);
            let quad = stroke_rate_norm_quad(&p, 2.0);
            assert!((exact - quad).abs() / exact < 1e-10, "a = {a}: {exact} vs {quad}");
        }
    }

    #[test]
    fn sign_violation_rejected() {
        let mut c = FtMapConfig::default();
        c.c_my_delta = 1e-5;
        assert!(matches!(c.validate(), Err(Error::SignConstraint(_))));
        assert!(FtMapConfig::default().validate().is_ok());
    }

    #[test]
    fn constant_rate_without_torque() {
        let m = InertiaModel::default();
        let mut s = BodyState {
            theta_dot: 0.3,
            ..BodyState::default()
        };
        for k in 0..100 {
            s = dynamics_step(&s, &m, 0.0, k as f64 * 1e-3, 1e-3, |_| WingAngles::default(), |_, _, _| {
                ForceTorque::default()
            })
            .unwrap();
        }
        assert!((s.theta_dot - 0.3).abs() < 1e-15);
    }
}
