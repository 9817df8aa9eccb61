use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Stroke-timing asymmetry outside the open interval (-0.5, 0.5), or above the
    /// configured hard limit where one applies.
    #[error("asymmetry A = {a} is not admissible: |A| must stay below {limit} (and strictly below 0.5)")]
    Admissibility { a: f64, limit: f64 },

    #[error("asymmetry A = {a} became inadmissible at t = {t} s")]
    InadmissibleAt { a: f64, t: f64 },

    #[error("modulation rate too fast at t = {t} s: drift-compensated numerator {numerator} <= 0")]
    RateTooFast { t: f64, numerator: f64 },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("cutoff {cutoff} Hz aliases at sample rate {rate} Hz (needs cutoff < rate / 2)")]
    Aliasing { cutoff: f64, rate: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("sign constraint violated: {0}")]
    SignConstraint(String),

    #[error("degenerate contour segment between points {index} and {next}")]
    DegenerateSegment { index: usize, next: usize },

    #[error("contour needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("normal system is ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("no stroke cycles found: {0}")]
    NoCycles(&'static str),

    #[error("need at least {needed} cycles, got {got}")]
    TooFewCycles { needed: usize, got: usize },

    #[error("profile grids do not match: {0}")]
    GridMismatch(String),

    #[error("integration fault at t = {t} s: {what}")]
    IntegrationFault { t: f64, what: &'static str },

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
