//! Attitude fusion and pitch-mean extraction.
//!
//! Body frame is x forward, y left, z up; a level body at rest reads
//! accel = (0, 0, +1) g. Euler angles are ZYX (yaw, pitch, roll) about those
//! axes, so a positive ZYX pitch puts the nose *down*.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BETA: f64 = 0.1;
pub const DEFAULT_LAMBDA: f64 = 0.995;
pub const DEFAULT_P0: f64 = 1e3;
/// Accel norms below this (in g) skip the gradient correction.
pub const MIN_ACCEL_G: f64 = 0.1;
pub const GIMBAL_LIMIT_DEG: f64 = 89.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conj(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    /// Rotation by `angle * axis` (rotation vector, rad).
    pub fn from_rotation_vector(v: [f64; 3]) -> Quat {
        let angle = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if angle < 1e-12 {
            // second-order series keeps the map smooth at zero
            return Quat::new(1.0 - angle * angle / 8.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]).normalized();
        }
        let s = (0.5 * angle).sin() / angle;
        Quat::new((0.5 * angle).cos(), v[0] * s, v[1] * s, v[2] * s)
    }

    /// Inverse of [`Quat::from_rotation_vector`], picking the short way round.
    pub fn to_rotation_vector(self) -> [f64; 3] {
        let q = if self.w < 0.0 {
            Quat::new(-self.w, -self.x, -self.y, -self.z)
        } else {
            self
        };
        let s = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        if s < 1e-12 {
            return [2.0 * q.x, 2.0 * q.y, 2.0 * q.z];
        }
        let angle = 2.0 * s.atan2(q.w);
        [q.x / s * angle, q.y / s * angle, q.z / s * angle]
    }

    /// Body-to-world rotation of a vector.
    pub fn rotate(self, v: [f64; 3]) -> [f64; 3] {
        let p = Quat::new(0.0, v[0], v[1], v[2]);
        let r = self.mul(p).mul(self.conj());
        [r.x, r.y, r.z]
    }

    /// Rotation angle between two attitudes, rad.
    pub fn angle_to(self, other: Quat) -> f64 {
        let d = (self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z).abs();
        2.0 * d.min(1.0).acos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    /// rad/s, body frame.
    pub gyro: [f64; 3],
    /// g, body frame specific force.
    pub accel: [f64; 3],
}

impl ImuSample {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.gyro.iter().chain(&self.accel).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MadgwickOutput {
    pub q: Quat,
    /// Correction skipped because the accel norm was below [`MIN_ACCEL_G`].
    pub accel_skipped: bool,
}

/// Gyro propagation by the exact exponential map for the step, followed by a
/// normalized gradient-descent step of size `beta * dt` towards the attitude
/// whose predicted gravity matches the accelerometer.
pub fn madgwick_update(q: Quat, sample: &ImuSample, beta: f64, dt: f64) -> Result<MadgwickOutput> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "dt",
            value: dt,
            reason: "step must be positive",
        });
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            value: beta,
            reason: "gain must be non-negative",
        });
    }
    if !sample.is_finite() {
        return Err(Error::NonFinite("IMU sample"));
    }
    let g = sample.gyro;
    let mut q = q.mul(Quat::from_rotation_vector([g[0] * dt, g[1] * dt, g[2] * dt]));

    let a = sample.accel;
    let an = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let mut skipped = false;
    if beta > 0.0 {
        if an < MIN_ACCEL_G {
            skipped = true;
        } else {
            let (ax, ay, az) = (a[0] / an, a[1] / an, a[2] / an);
            let (q0, q1, q2, q3) = (q.w, q.x, q.y, q.z);
            // predicted body-frame gravity minus measurement
            let f1 = 2.0 * (q1 * q3 - q0 * q2) - ax;
            let f2 = 2.0 * (q0 * q1 + q2 * q3) - ay;
            let f3 = 2.0 * (0.5 - q1 * q1 - q2 * q2) - az;
            let s0 = -2.0 * q2 * f1 + 2.0 * q1 * f2;
            let s1 = 2.0 * q3 * f1 + 2.0 * q0 * f2 - 4.0 * q1 * f3;
            let s2 = -2.0 * q0 * f1 + 2.0 * q3 * f2 - 4.0 * q2 * f3;
            let s3 = 2.0 * q1 * f1 + 2.0 * q2 * f2;
            let sn = (s0 * s0 + s1 * s1 + s2 * s2 + s3 * s3).sqrt();
            if sn > 0.0 {
                let k = beta * dt / sn;
                q = Quat::new(q0 - k * s0, q1 - k * s1, q2 - k * s2, q3 - k * s3);
            }
        }
    }
    Ok(MadgwickOutput {
        q: q.normalized(),
        accel_skipped: skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Euler {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// |pitch| beyond [`GIMBAL_LIMIT_DEG`].
    pub gimbal: bool,
}

/// ZYX angles in degrees.
pub fn euler_from_quat(q: Quat) -> Euler {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
    let sp = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
    let pitch = sp.asin();
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    let pitch_deg = pitch.to_degrees();
    Euler {
        roll: roll.to_degrees(),
        pitch: pitch_deg,
        yaw: yaw.to_degrees(),
        gimbal: pitch_deg.abs() > GIMBAL_LIMIT_DEG,
    }
}

/// ZYX angles in degrees to a unit quaternion.
pub fn quat_from_euler(roll: f64, pitch: f64, yaw: f64) -> Quat {
    let (sr, cr) = (0.5 * roll.to_radians()).sin_cos();
    let (sp, cp) = (0.5 * pitch.to_radians()).sin_cos();
    let (sy, cy) = (0.5 * yaw.to_radians()).sin_cos();
    Quat::new(
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlsState {
    /// (a, b, c): sine and cosine coefficients and the mean.
    pub w: Vector3<f64>,
    pub p: Matrix3<f64>,
    pub lambda: f64,
}

impl RlsState {
    pub fn new(lambda: f64, p0: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: lambda,
                reason: "forgetting factor must lie in (0, 1]",
            });
        }
        if !(p0 > 0.0 && p0.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "p0",
                value: p0,
                reason: "initial covariance must be positive",
            });
        }
        Ok(Self {
            w: Vector3::zeros(),
            p: Matrix3::identity() * p0,
            lambda,
        })
    }

    pub fn mean(&self) -> f64 {
        self.w[2]
    }
}

impl Default for RlsState {
    fn default() -> Self {
        Self::new(DEFAULT_LAMBDA, DEFAULT_P0).expect("defaults are valid")
    }
}

/// Standard exponentially weighted RLS step. Returns the updated mean `c`.
pub fn rls_update(state: &mut RlsState, y: f64, regressor: [f64; 3]) -> Result<f64> {
    if !y.is_finite() || !regressor.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("RLS input"));
    }
    let phi = Vector3::from(regressor);
    let p_phi = state.p * phi;
    let k = p_phi / (state.lambda + phi.dot(&p_phi));
    let e = y - phi.dot(&state.w);
    let w = state.w + k * e;
    let mut p = (state.p - k * (phi.transpose() * state.p)) / state.lambda;
    // round-off drifts P away from symmetry over long runs
    p = 0.5 * (p + p.transpose());
    if !w.iter().chain(p.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("RLS update"));
    }
    state.w = w;
    state.p = p;
    Ok(w[2])
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseAccumulator {
    pub phi: f64,
}

/// `phi += omega_inst * dt`; regressor `(sin phi, cos phi, 1)`.
pub fn adaptive_regressor(acc: &mut PhaseAccumulator, omega_inst: f64, dt: f64) -> [f64; 3] {
    acc.phi += omega_inst * dt;
    let (s, c) = acc.phi.sin_cos();
    [s, c, 1.0]
}
