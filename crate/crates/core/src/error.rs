//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A user function returned NaN or an infinity.
    #[error("non-finite value {value} encountered at t={at}")]
    NonFinite { at: f64, value: f64 },

    #[error("iteration budget of {max_iterations} exhausted (error estimate {error_estimate:e})")]
    MaxIterationsExceeded {
        max_iterations: usize,
        error_estimate: f64,
    },

    /// The residual has the same strict sign at both ends of the bracket.
    #[error("root not bracketed on [{lo}, {hi}]: f(lo)={f_lo:e}, f(hi)={f_hi:e}")]
    NotBracketed {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("switch-off time t1={t1} precedes the peak time t0={t0}")]
    SwitchOffBeforePeak { t1: f64, t0: f64 },

    /// The demand is delivered before the rate stabilizes. `ramp_time` is
    /// populated where the ramp-phase completion time is meaningful.
    #[error("demand Q={demand} is below the minimum deliverable energy {minimum} with t1 >= t0")]
    QTooSmall {
        demand: f64,
        minimum: f64,
        ramp_time: Option<f64>,
    },

    #[error("degenerate profile: plateau rate f(t0)={plateau_rate} is not positive")]
    DegenerateProfile { plateau_rate: f64 },

    #[error("samples are not monotone: {0}")]
    NonMonotoneSamples(String),

    #[error("ramp ends at rate {ramp_end} but decay starts at rate {decay_start}")]
    ContinuityMismatch { ramp_end: f64, decay_start: f64 },

    #[error("empty sample list: {0}")]
    EmptySamples(&'static str),

    #[error("time step dt={dt} exceeds phase length {phase_length}")]
    StepTooLarge { dt: f64, phase_length: f64 },

    #[error(
        "Monte-Carlo delivered energy {sample_mean} deviates from Q={demand} by more than the band {band:e}"
    )]
    MeanVerificationFailed {
        sample_mean: f64,
        demand: f64,
        band: f64,
    },
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "InvalidParams",
            Error::NonFinite { .. } => "NonFinite",
            Error::MaxIterationsExceeded { .. } => "MaxIterationsExceeded",
            Error::NotBracketed { .. } => "NotBracketed",
            Error::SwitchOffBeforePeak { .. } => "SwitchOffBeforePeak",
            Error::QTooSmall { .. } => "QTooSmall",
            Error::DegenerateProfile { .. } => "DegenerateProfile",
            Error::NonMonotoneSamples(_) => "NonMonotoneSamples",
            Error::ContinuityMismatch { .. } => "ContinuityMismatch",
            Error::EmptySamples(_) => "EmptySamples",
            Error::StepTooLarge { .. } => "StepTooLarge",
            Error::MeanVerificationFailed { .. } => "MeanVerificationFailed",
        }
    }

    /// Whether the error means the problem itself has no solution, as opposed
    /// to a numerical failure.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::QTooSmall { .. } | Error::NotBracketed { .. })
    }
}
