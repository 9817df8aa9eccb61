//! Rhythm generation, estimation, control and analysis for an insect-scale
//! flapping-wing robot: stroke-timing-asymmetry phase oscillators, a dual-wing
//! servo CPG, Madgwick/RLS estimation, PID control with offset- or
//! timing-mode allocation, a time-varying-inertia flight plant, periodic
//! B-spline wing contours and bench force/torque processing.

pub mod error;
pub mod star;
pub mod cpg;
pub mod estimation;
pub mod control;
pub mod plant;
pub mod sim;
pub mod morphology;
pub mod bench;
pub mod io;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
