//! Force/torque bench processing: activity detection, zero-phase Butterworth
//! filtering, stroke-reversal segmentation, phase-locked averaging, inertial
//! subtraction, impulse integration and sweep statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FS: f64 = 222.0;
pub const DEFAULT_CUTOFF: f64 = 50.0;
pub const DEFAULT_ORDER: usize = 4;
pub const DEFAULT_GRID: usize = 200;
pub const SWEEP_WINDOW: usize = 40;
pub const SWEEP_NOMINAL: usize = 80;
pub const MIN_SWEEP_CYCLES: usize = 4;
pub const FT_NAMES: [&str; 6] = ["Fx", "Fy", "Fz", "Mx", "My", "Mz"];

/// One bench recording. `stroke` is an optional measured stroke-angle channel
/// (deg); without it, segmentation runs on the left servo command.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchRecord {
    pub t: Vec<f64>,
    pub force: Vec<[f64; 3]>,
    pub torque: Vec<[f64; 3]>,
    pub pwm: Vec<[f64; 2]>,
    pub stroke: Option<Vec<f64>>,
}

impl BenchRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if self.force.len() != n
            || self.torque.len() != n
            || self.pwm.len() != n
            || self.stroke.as_ref().is_some_and(|s| s.len() != n)
        {
            return Err(Error::Input("bench columns have different lengths".into()));
        }
        if let Some(i) = self.t.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Input(format!(
                "time is not strictly increasing at row {}",
                i + 1
            )));
        }
        Ok(())
    }

    /// Column `k` of Fx, Fy, Fz, Mx, My, Mz.
    pub fn channel(&self, k: usize) -> Vec<f64> {
        if k < 3 {
            self.force.iter().map(|v| v[k]).collect()
        } else {
            self.torque.iter().map(|v| v[k - 3]).collect()
        }
    }

    /// Mean sample rate from the time stamps.
    pub fn sample_rate(&self) -> Option<f64> {
        let n = self.t.len();
        (n >= 2).then(|| (n - 1) as f64 / (self.t[n - 1] - self.t[0]))
    }

    pub fn slice(&self, start: usize, end: usize) -> BenchRecord {
        BenchRecord {
            t: self.t[start..=end].to_vec(),
            force: self.force[start..=end].to_vec(),
            torque: self.torque[start..=end].to_vec(),
            pwm: self.pwm[start..=end].to_vec(),
            stroke: self.stroke.as_ref().map(|s| s[start..=end].to_vec()),
        }
    }
}

/// Inclusive sample window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

/// First and last samples of activity runs (|pwm - idle| > threshold) that
/// last at least `debounce` samples. `None` when nothing qualifies.
pub fn detect_active(pwm: &[f64], idle: f64, threshold: f64, debounce: usize) -> Option<Window> {
    let debounce = debounce.max(1);
    let mut first = None;
    let mut last = None;
    let mut run_start = None;
    for i in 0..=pwm.len() {
        let active = i < pwm.len() && (pwm[i] - idle).abs() > threshold;
        match (active, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                if i - s >= debounce {
                    first.get_or_insert(s);
                    last = Some(i - 1);
                }
                run_start = None;
            }
            _ => {}
        }
    }
    Some(Window {
        start: first?,
        end: last?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSpec {
    pub order: usize,
    pub cutoff: f64,
    pub fs: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            cutoff: DEFAULT_CUTOFF,
            fs: DEFAULT_FS,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || !self.order.is_multiple_of(2) {
            return Err(Error::InvalidParameter {
                name: "order",
                value: self.order as f64,
                reason: "must be a positive even number",
            });
        }
        if !(self.fs > 0.0) {
            return Err(Error::InvalidParameter {
                name: "fs",
                value: self.fs,
                reason: "must be positive",
            });
        }
        if !(self.cutoff > 0.0 && self.cutoff < self.fs / 2.0) {
            return Err(Error::Aliasing {
                cutoff: self.cutoff,
                rate: self.fs,
            });
        }
        Ok(())
    }
}

/// Second-order section, `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    /// Transposed direct form II over `x`, starting from the steady state of
    /// a constant input `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let g = self.dc_gain();
        let mut z1 = (g - self.b[0]) * x0;
        let mut z2 = (self.b[2] - self.a[2] * g) * x0;
        for v in x.iter_mut() {
            let xi = *v;
            let y = self.b[0] * xi + z1;
            z1 = self.b[1] * xi - self.a[1] * y + z2;
            z2 = self.b[2] * xi - self.a[2] * y;
            *v = y;
        }
    }

    fn response(&self, w: f64) -> (f64, f64) {
        // H(e^{jw}) as (re, im)
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b[0] + self.b[1] * c1 + self.b[2] * c2,
            self.b[1] * s1 + self.b[2] * s2,
        );
        let den = (
            self.a[0] + self.a[1] * c1 + self.a[2] * c2,
            self.a[1] * s1 + self.a[2] * s2,
        );
        let d = den.0 * den.0 + den.1 * den.1;
        (
            (num.0 * den.0 + num.1 * den.1) / d,
            (num.1 * den.0 - num.0 * den.1) / d,
        )
    }
}

/// Butterworth low-pass as cascaded biquads: bilinear transform with the
/// cutoff prewarped so the digital -3 dB point lands exactly on `cutoff`.
pub fn butterworth_sections(spec: &FilterSpec) -> Result<Vec<Biquad>> {
    spec.validate()?;
    let k = (std::f64::consts::PI * spec.cutoff / spec.fs).tan();
    let n = spec.order;
    Ok((1..=n / 2)
        .map(|j| {
            let theta = std::f64::consts::PI * (2 * j - 1) as f64 / (2 * n) as f64;
            let q = 1.0 / (2.0 * theta.cos());
            let norm = 1.0 / (1.0 + k / q + k * k);
            let b0 = k * k * norm;
            Biquad {
                b: [b0, 2.0 * b0, b0],
                a: [1.0, 2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
            }
        })
        .collect())
}

/// Single-pass digital magnitude at `f` Hz.
pub fn digital_magnitude(spec: &FilterSpec, f: f64) -> Result<f64> {
    let w = 2.0 * std::f64::consts::PI * f / spec.fs;
    Ok(butterworth_sections(spec)?
        .iter()
        .map(|s| {
            let (re, im) = s.response(w);
            re.hypot(im)
        })
        .product())
}

/// Analog prototype magnitude `1 / sqrt(1 + (f / fc)^(2n))`.
pub fn analog_magnitude(spec: &FilterSpec, f: f64) -> f64 {
    1.0 / (1.0 + (f / spec.cutoff).powi(2 * spec.order as i32)).sqrt()
}

fn apply(sections: &[Biquad], x: &mut [f64]) {
    for s in sections {
        s.run(x);
    }
}

/// Zero-phase (forward-backward) low-pass; the effective magnitude is the
/// square of the single-pass response. Ends are padded by odd reflection.
pub fn butterworth_lowpass(signal: &[f64], spec: &FilterSpec) -> Result<Vec<f64>> {
    let sections = butterworth_sections(spec)?;
    let n = signal.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("filter input"));
    }
    let pad = (3 * (2 * sections.len() + 1)).min(n - 1);
    let mut x = Vec::with_capacity(n + 2 * pad);
    let (first, last) = (signal[0], signal[n - 1]);
    x.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
    x.extend_from_slice(signal);
    x.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));
    apply(&sections, &mut x);
    x.reverse();
    apply(&sections, &mut x);
    x.reverse();
    Ok(x[pad..pad + n].to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    /// Minimum extremum prominence as a fraction of the signal range.
    pub prominence: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self { prominence: 0.25 }
    }
}

/// Stroke reversals. Indices are fractional (parabolic vertex refinement).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reversals {
    pub maxima: Vec<f64>,
    pub minima: Vec<f64>,
}

impl Reversals {
    /// Full cycles run top reversal to top reversal (downstroke first).
    pub fn boundaries(&self) -> &[f64] {
        &self.maxima
    }
}

/// Local maxima of `x` with curvature and prominence checks.
fn peaks(x: &[f64], min_prominence: f64) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i] - x[i - 1] > 0.0 {
            // walk a plateau
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                let c = (i + j) / 2;
                let curv = x[j + 1] - 2.0 * x[c] + x[i - 1];
                if curv < 0.0 && prominence(x, i, j) >= min_prominence {
                    let mut idx = (i + j) as f64 / 2.0;
                    if i == j {
                        let (a, b, d) = (x[i - 1], x[i], x[i + 1]);
                        let den = a - 2.0 * b + d;
                        if den < 0.0 {
                            idx += (0.5 * (a - d) / den).clamp(-0.5, 0.5);
                        }
                    }
                    out.push(idx);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Height above the higher of the two bases reached before a taller sample
/// (or the series end) on each side.
fn prominence(x: &[f64], i: usize, j: usize) -> f64 {
    let top = x[i];
    let mut left_min = top;
    for k in (0..i).rev() {
        if x[k] > top {
            break;
        }
        left_min = left_min.min(x[k]);
    }
    let mut right_min = top;
    for &v in &x[j + 1..] {
        if v > top {
            break;
        }
        right_min = right_min.min(v);
    }
    top - left_min.max(right_min)
}

pub fn segment_cycles(signal: &[f64], cfg: &SegmentConfig) -> Result<Reversals> {
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("stroke signal"));
    }
    let (lo, hi) = signal
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let range = hi - lo;
    if signal.len() < 3 || !(range > 0.0) {
        return Err(Error::NoCycles("stroke signal is constant"));
    }
    let thr = cfg.prominence * range;
    let maxima = peaks(signal, thr);
    let neg: Vec<f64> = signal.iter().map(|v| -v).collect();
    let minima = peaks(&neg, thr);
    if maxima.len() < 2 {
        return Err(Error::NoCycles("fewer than two stroke reversals of the same kind"));
    }
    Ok(Reversals { maxima, minima })
}

fn interp_at(x: &[f64], idx: f64) -> f64 {
    let n = x.len();
    let i = (idx.floor().max(0.0) as usize).min(n - 1);
    if i + 1 >= n {
        return x[n - 1];
    }
    let f = idx - i as f64;
    x[i] + (x[i + 1] - x[i]) * f
}

pub fn uniform_grid(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}

/// Samples of one channel on the normalized grid for each cycle delimited by
/// consecutive (fractional) boundaries.
pub fn cycles_on_grid(signal: &[f64], boundaries: &[f64], grid: &[f64]) -> Vec<Vec<f64>> {
    boundaries
        .windows(2)
        .map(|b| {
            grid.iter()
                .map(|&s| interp_at(signal, b[0] + s * (b[1] - b[0])))
                .collect()
        })
        .collect()
}

/// Linear resample of a cycle (samples spanning normalized time [0, 1]).
pub fn resample_cycle(cycle: &[f64], grid: &[f64]) -> Vec<f64> {
    let last = (cycle.len() - 1) as f64;
    grid.iter().map(|&s| interp_at(cycle, s * last)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleProfile {
    pub grid: Vec<f64>,
    pub names: Vec<String>,
    pub mean: Vec<Vec<f64>>,
    /// Pointwise sample variance; undefined for a single cycle.
    pub var: Option<Vec<Vec<f64>>>,
    pub n_cycles: usize,
}

impl CycleProfile {
    pub fn component(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.mean[k].as_slice())
    }
}

/// Pointwise mean and variance across cycles. `cycles[c][k]` is component
/// `k` of cycle `c`; each is resampled to a `grid_n`-point grid first.
pub fn phase_lock_average(
    names: &[&str],
    cycles: &[Vec<Vec<f64>>],
    grid_n: usize,
) -> Result<CycleProfile> {
    if cycles.is_empty() {
        return Err(Error::NoCycles("nothing to average"));
    }
    if grid_n < 2 {
        return Err(Error::InvalidParameter {
            name: "grid",
            value: grid_n as f64,
            reason: "needs at least two points",
        });
    }
    let grid = uniform_grid(grid_n);
    let nk = names.len();
    for c in cycles {
        if c.len() != nk || c.iter().any(|s| s.len() < 2) {
            return Err(Error::Input(
                "each cycle needs every component with at least two samples".into(),
            ));
        }
    }
    let resampled: Vec<Vec<Vec<f64>>> = cycles
        .iter()
        .map(|c| c.iter().map(|s| resample_cycle(s, &grid)).collect())
        .collect();
    let nc = resampled.len() as f64;
    let mean: Vec<Vec<f64>> = (0..nk)
        .map(|k| {
            (0..grid_n)
                .map(|g| resampled.iter().map(|c| c[k][g]).sum::<f64>() / nc)
                .collect()
        })
        .collect();
    let var = (resampled.len() > 1).then(|| {
        (0..nk)
            .map(|k| {
                (0..grid_n)
                    .map(|g| {
                        resampled
                            .iter()
                            .map(|c| (c[k][g] - mean[k][g]).powi(2))
                            .sum::<f64>()
                            / (nc - 1.0)
                    })
                    .collect()
            })
            .collect()
    });
    Ok(CycleProfile {
        grid,
        names: names.iter().map(|s| s.to_string()).collect(),
        mean,
        var,
        n_cycles: resampled.len(),
    })
}

/// Aerodynamic estimate: intact minus perforated (inertial-only) profile.
/// Variances add, the two runs being independent.
pub fn subtract_inertial(intact: &CycleProfile, perforated: &CycleProfile) -> Result<CycleProfile> {
    if intact.names != perforated.names {
        return Err(Error::GridMismatch(format!(
            "components {:?} vs {:?}",
            intact.names, perforated.names
        )));
    }
    let spans = |p: &CycleProfile| {
        p.grid.len() >= 2
            && p.grid[0].abs() < 1e-9
            && (p.grid[p.grid.len() - 1] - 1.0).abs() < 1e-9
    };
    let consistent = |p: &CycleProfile| {
        p.mean.len() == p.names.len()
            && p.mean.iter().all(|m| m.len() == p.grid.len())
            && p.var.as_ref().is_none_or(|v| {
                v.len() == p.names.len() && v.iter().all(|m| m.len() == p.grid.len())
            })
    };
    if !consistent(intact) || !consistent(perforated) {
        return Err(Error::GridMismatch(
            "profile vectors do not match their grid".into(),
        ));
    }
    if !spans(intact) || !spans(perforated) {
        return Err(Error::GridMismatch(
            "profiles must both span normalized time [0, 1]".into(),
        ));
    }
    let same = intact.grid.len() == perforated.grid.len()
        && intact
            .grid
            .iter()
            .zip(&perforated.grid)
            .all(|(a, b)| (a - b).abs() < 1e-12);
    let on_grid = |v: &[f64]| {
        if same {
            v.to_vec()
        } else {
            resample_cycle(v, &intact.grid)
        }
    };
    let mean = intact
        .mean
        .iter()
        .zip(&perforated.mean)
        .map(|(a, b)| a.iter().zip(on_grid(b)).map(|(x, y)| x - y).collect())
        .collect();
    let var = match (&intact.var, &perforated.var) {
        (Some(a), Some(b)) => Some(
            a.iter()
                .zip(b)
                .map(|(x, y)| x.iter().zip(on_grid(y)).map(|(p, q)| p + q).collect())
                .collect(),
        ),
        _ => None,
    };
    Ok(CycleProfile {
        grid: intact.grid.clone(),
        names: intact.names.clone(),
        mean,
        var,
        n_cycles: intact.n_cycles.min(perforated.n_cycles),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impulse {
    pub signed: f64,
    pub absolute: f64,
}

/// Trapezoidal integral over one cycle of duration `period` for a profile
/// sampled on a uniform normalized grid.
pub fn integrate_impulse(grid: &[f64], values: &[f64], period: f64) -> Result<Impulse> {
    if grid.len() != values.len() || grid.len() < 2 {
        return Err(Error::GridMismatch(
            "grid and values must match, with at least two samples".into(),
        ));
    }
    let h = grid[1] - grid[0];
    if grid
        .windows(2)
        .any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1e-300))
    {
        return Err(Error::GridMismatch("grid is not uniform".into()));
    }
    let dt = h * period;
    let trap = |f: &dyn Fn(f64) -> f64| {
        values.windows(2).map(|w| 0.5 * (f(w[0]) + f(w[1]))).sum::<f64>() * dt
    };
    Ok(Impulse {
        signed: trap(&|v| v),
        absolute: trap(&|v: f64| v.abs()),
    })
}

/// Angular coordinate `2π t_norm` and radius shifted to be non-negative.
pub fn polar_profile(grid: &[f64], values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let offset = if min.is_finite() { (-min).max(0.0) } else { 0.0 };
    (
        grid.iter().map(|s| 2.0 * std::f64::consts::PI * s).collect(),
        values.iter().map(|v| v + offset).collect(),
    )
}

pub type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Direction of a marker chain projected onto the plane normal to `axis`:
/// the principal direction of the projected markers, oriented first-to-last.
fn segment_direction(markers: &[Vec3], axis: Vec3) -> Option<Vec3> {
    if markers.len() < 2 {
        return None;
    }
    let proj: Vec<Vec3> = markers
        .iter()
        .map(|&m| {
            let d = dot(m, axis);
            [m[0] - d * axis[0], m[1] - d * axis[1], m[2] - d * axis[2]]
        })
        .collect();
    let k = proj.len() as f64;
    let c = proj.iter().fold([0.0; 3], |a, p| {
        [a[0] + p[0] / k, a[1] + p[1] / k, a[2] + p[2] / k]
    });
    let span = sub(proj[proj.len() - 1], proj[0]);
    let scale = proj.iter().map(|p| norm(sub(*p, c))).fold(0.0, f64::max);
    if !(scale > 1e-12) {
        return None;
    }
    // power iteration on the scatter matrix, seeded with the end-to-end span
    let mut v = if norm(span) > 1e-12 * scale { span } else { sub(proj[1], proj[0]) };
    for _ in 0..100 {
        let mut w = [0.0; 3];
        for p in &proj {
            let d = sub(*p, c);
            let s = dot(d, v);
            for z in 0..3 {
                w[z] += s * d[z];
            }
        }
        let nw = norm(w);
        if !(nw > 0.0) {
            return None;
        }
        v = [w[0] / nw, w[1] / nw, w[2] / nw];
    }
    if dot(v, span) < 0.0 {
        v = [-v[0], -v[1], -v[2]];
    }
    Some(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendingResult {
    /// Degrees; `None` marks frames whose projected segment collapsed.
    pub angles: Vec<Option<f64>>,
    pub max_downstroke: Option<f64>,
    pub max_upstroke: Option<f64>,
}

/// Angle between proximal and distal segment directions in the plane normal
/// to the rotation axis. Half-strokes come from the stroke angle (positive
/// up): falling stroke is downstroke.
pub fn bending_angle(
    proximal: &[Vec<Vec3>],
    distal: &[Vec<Vec3>],
    axis: Vec3,
    stroke: &[f64],
) -> Result<BendingResult> {
    let na = norm(axis);
    if !(na > 1e-12) || !na.is_finite() {
        return Err(Error::InvalidParameter {
            name: "axis",
            value: na,
            reason: "rotation axis must be non-degenerate",
        });
    }
    if proximal.len() != distal.len() || stroke.len() != proximal.len() {
        return Err(Error::Input("marker frames and stroke samples differ in length".into()));
    }
    let axis = [axis[0] / na, axis[1] / na, axis[2] / na];
    let angles: Vec<Option<f64>> = proximal
        .iter()
        .zip(distal)
        .map(|(p, d)| {
            let a = segment_direction(p, axis)?;
            let b = segment_direction(d, axis)?;
            Some(dot(a, b).clamp(-1.0, 1.0).acos().to_degrees())
        })
        .collect();
    let mut down: Option<f64> = None;
    let mut up: Option<f64> = None;
    for (i, a) in angles.iter().enumerate() {
        let Some(a) = *a else { continue };
        let slope = if i + 1 < stroke.len() {
            stroke[i + 1] - stroke[i]
        } else if i > 0 {
            stroke[i] - stroke[i - 1]
        } else {
            0.0
        };
        let slot = if slope < 0.0 { &mut down } else { &mut up };
        *slot = Some(slot.map_or(a, |m: f64| m.max(a)));
    }
    Ok(BendingResult {
        angles,
        max_downstroke: down,
        max_upstroke: up,
    })
}

/// One modulation setting: per-cycle samples of (Fx, Fy, Fz, Mx, My, Mz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub setting: f64,
    pub cycles: Vec<Vec<[f64; 6]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStat {
    pub setting: f64,
    pub n_cycles: usize,
    pub n_used: usize,
    pub mean: [f64; 6],
    /// Sample standard deviation across the selected cycle averages.
    pub std: [f64; 6],
    pub warning: Option<String>,
}

/// Middle `SWEEP_WINDOW` cycles (middle half when fewer than the nominal
/// count), averaged per cycle, then mean and spread across cycles.
pub fn modulation_sweep_stats(runs: &[SweepRun]) -> Result<Vec<SweepStat>> {
    runs.iter()
        .map(|run| {
            let n = run.cycles.len();
            if n < MIN_SWEEP_CYCLES {
                return Err(Error::TooFewCycles {
                    needed: MIN_SWEEP_CYCLES,
                    got: n,
                });
            }
            let (used, warning) = if n >= SWEEP_NOMINAL {
                (SWEEP_WINDOW, None)
            } else {
                (
                    n / 2,
                    Some(format!(
                        "setting {}: only {n} cycles (< {SWEEP_NOMINAL}); using the middle {}",
                        run.setting,
                        n / 2
                    )),
                )
            };
            let start = (n - used) / 2;
            let avgs: Vec<[f64; 6]> = run.cycles[start..start + used]
                .iter()
                .map(|c| {
                    let mut m = [0.0; 6];
                    for s in c {
                        for k in 0..6 {
                            m[k] += s[k] / c.len() as f64;
                        }
                    }
                    m
                })
                .collect();
            let k = avgs.len() as f64;
            let mut mean = [0.0; 6];
            let mut std = [0.0; 6];
            for j in 0..6 {
                mean[j] = avgs.iter().map(|a| a[j]).sum::<f64>() / k;
                std[j] = (avgs.iter().map(|a| (a[j] - mean[j]).powi(2)).sum::<f64>()
                    / (k - 1.0))
                    .sqrt();
            }
            Ok(SweepStat {
                setting: run.setting,
                n_cycles: n,
                n_used: used,
                mean,
                std,
                warning,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub filter: FilterSpec,
    pub segment: SegmentConfig,
    pub grid: usize,
    pub idle_pwm: f64,
    pub threshold: f64,
    pub debounce: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            filter: FilterSpec::default(),
            segment: SegmentConfig::default(),
            grid: DEFAULT_GRID,
            idle_pwm: 1500.0,
            threshold: 20.0,
            debounce: 5,
        }
    }
}

/// Phase-locked force/torque profile of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunProfile {
    pub window: Window,
    pub profile: CycleProfile,
    /// Mean cycle duration, s.
    pub period: f64,
    /// Per-cycle samples on the grid, `[cycle][component][grid]`.
    pub cycles: Vec<Vec<Vec<f64>>>,
}

/// detect → filter → segment → phase-lock average.
pub fn analyze_run(rec: &BenchRecord, cfg: &AnalysisConfig) -> Result<RunProfile> {
    rec.validate()?;
    if rec.is_empty() {
        return Err(Error::Input("empty bench record".into()));
    }
    let dev: Vec<f64> = rec
        .pwm
        .iter()
        .map(|p| {
            if (p[0] - cfg.idle_pwm).abs() >= (p[1] - cfg.idle_pwm).abs() {
                p[0]
            } else {
                p[1]
            }
        })
        .collect();
    let window = detect_active(&dev, cfg.idle_pwm, cfg.threshold, cfg.debounce)
        .ok_or(Error::NoCycles("no servo activity above threshold"))?;
    let run = rec.slice(window.start, window.end);
    let stroke_raw = match &run.stroke {
        Some(s) => s.clone(),
        None => run.pwm.iter().map(|p| p[0]).collect(),
    };
    let stroke = butterworth_lowpass(&stroke_raw, &cfg.filter)?;
    let rev = segment_cycles(&stroke, &cfg.segment)?;
    let b = rev.boundaries();
    let grid = uniform_grid(cfg.grid);
    let channels: Vec<Vec<f64>> = (0..6)
        .map(|k| butterworth_lowpass(&run.channel(k), &cfg.filter))
        .collect::<Result<_>>()?;
    let per_channel: Vec<Vec<Vec<f64>>> = channels
        .iter()
        .map(|c| cycles_on_grid(c, b, &grid))
        .collect();
    let n_cycles = b.len() - 1;
    let cycles: Vec<Vec<Vec<f64>>> = (0..n_cycles)
        .map(|c| per_channel.iter().map(|ch| ch[c].clone()).collect())
        .collect();
    let profile = phase_lock_average(&FT_NAMES, &cycles, cfg.grid)?;
    let span_t = interp_at(&run.t, b[b.len() - 1]) - interp_at(&run.t, b[0]);
    Ok(RunProfile {
        window,
        profile,
        period: span_t / n_cycles as f64,
        cycles,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchAnalysis {
    pub intact: RunProfile,
    pub perforated: RunProfile,
    pub aero: CycleProfile,
    pub impulses: Vec<(String, Impulse)>,
}

pub fn analyze_pair(
    intact: &BenchRecord,
    perforated: &BenchRecord,
    cfg: &AnalysisConfig,
) -> Result<BenchAnalysis> {
    let a = analyze_run(intact, cfg)?;
    let b = analyze_run(perforated, cfg)?;
    let aero = subtract_inertial(&a.profile, &b.profile)?;
    let impulses = aero
        .names
        .iter()
        .zip(&aero.mean)
        .map(|(n, v)| Ok((n.clone(), integrate_impulse(&aero.grid, v, a.period)?)))
        .collect::<Result<_>>()?;
    Ok(BenchAnalysis {
        intact: a,
        perforated: b,
        aero,
        impulses,
    })
}

/// Synthetic bench session generator with known aerodynamic and inertial
/// cycle profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticBench {
    pub fs: f64,
    pub f: f64,
    pub cycles: usize,
    pub idle_s: f64,
    /// Stroke amplitude, deg.
    pub zeta: f64,
    pub force_noise: f64,
    pub torque_noise: f64,
    pub stroke_noise: f64,
}

impl Default for SyntheticBench {
    fn default() -> Self {
        Self {
            fs: DEFAULT_FS,
            f: 8.0,
            cycles: 60,
            idle_s: 0.5,
            zeta: 40.0,
            force_noise: 0.01,
            torque_noise: 2e-4,
            stroke_noise: 0.2,
        }
    }
}

impl SyntheticBench {
    /// Aerodynamic profile at normalized cycle time `s` (cycle starts at the
    /// top reversal).
    pub fn aero(&self, s: f64) -> [f64; 6] {
        let w = 2.0 * std::f64::consts::PI * s;
        [
            0.05 * (w).sin() + 0.02 * (2.0 * w).cos() + 0.01,
            0.0,
            0.20 * (w).sin().max(0.0) + 0.06 * (2.0 * w + 0.3).sin() + 0.05,
            0.0,
            2e-3 * (w + 0.5).sin() + 4e-4,
            0.0,
        ]
    }

    pub fn inertial(&self, s: f64) -> [f64; 6] {
        let w = 2.0 * std::f64::consts::PI * s;
        [
            0.03 * (2.0 * w).sin(),
            0.0,
            0.12 * (w).cos() + 0.04 * (2.0 * w).sin(),
            0.0,
            1.5e-3 * (w).cos(),
            0.0,
        ]
    }

    pub fn record(&self, with_aero: bool, seed: u64) -> Result<BenchRecord> {
        if !(self.fs > 0.0 && self.f > 0.0 && self.f < self.fs / 4.0) {
            return Err(Error::InvalidParameter {
                name: "f",
                value: self.f,
                reason: "needs 0 < f < fs / 4",
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nf = Normal::new(0.0, self.force_noise.max(0.0)).map_err(|e| Error::Input(e.to_string()))?;
        let nm = Normal::new(0.0, self.torque_noise.max(0.0)).map_err(|e| Error::Input(e.to_string()))?;
        let ns = Normal::new(0.0, self.stroke_noise.max(0.0)).map_err(|e| Error::Input(e.to_string()))?;
        let active = self.cycles as f64 / self.f;
        let total = 2.0 * self.idle_s + active;
        let n = (total * self.fs).round() as usize + 1;
        let mut rec = BenchRecord {
            stroke: Some(Vec::with_capacity(n)),
            ..BenchRecord::default()
        };
        for i in 0..n {
            let t = i as f64 / self.fs;
            let ta = t - self.idle_s;
            let on = (0.0..active).contains(&ta);
            let (mut fv, mut stroke) = ([0.0; 6], 0.0);
            if on {
                let s = (ta * self.f).fract();
                stroke = self.zeta * (2.0 * std::f64::consts::PI * s).cos();
                let inert = self.inertial(s);
                let aero = if with_aero { self.aero(s) } else { [0.0; 6] };
                for k in 0..6 {
                    fv[k] = inert[k] + aero[k];
                }
            }
            for (k, v) in fv.iter_mut().enumerate() {
                *v += if k < 3 { nf.sample(&mut rng) } else { nm.sample(&mut rng) };
            }
            let pwm = 1500.0 + 10.0 * stroke;
            rec.t.push(t);
            rec.force.push([fv[0], fv[1], fv[2]]);
            rec.torque.push([fv[3], fv[4], fv[5]]);
            rec.pwm.push([pwm, pwm]);
            rec.stroke
                .as_mut()
                .unwrap()
                .push(stroke + if on { ns.sample(&mut rng) } else { 0.0 });
        }
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_have_unit_dc_gain() {
        for s in butterworth_sections(&FilterSpec::default()).unwrap() {
            assert!((s.dc_gain() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cutoff_is_minus_three_db() {
        let spec = FilterSpec::default();
        let m = digital_magnitude(&spec, spec.cutoff).unwrap();
        assert!((m - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn aliasing_cutoff_rejected() {
        let spec = FilterSpec {
            cutoff: 111.0,
            ..FilterSpec::default()
        };
        assert!(matches!(
            butterworth_lowpass(&[1.0, 2.0], &spec),
            Err(Error::Aliasing { .. })
        ));
    }

    #[test]
    fn prominence_rejects_ripple() {
        let x = [0.0, 1.0, 0.9, 0.95, 0.2, 0.0, 1.0, 0.0];
        let p = peaks(&x, 0.5);
        assert_eq!(p.len(), 2);
    }
}
