//! Piecewise supply-rate profiles: ramp on `[0, t0]`, plateau at the peak
//! rate until the switch-off time `t1`, decay over `[t1, t1 + T]`, and zero
//! afterwards.
//!
//! The decay is stored as a shape `h(u)` of the time elapsed since switch-off,
//! so one profile describes the whole family of rates indexed by `t1`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate, integrate_with_breakpoints, Interval, Tolerance};

pub type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const MONOTONE_SAMPLES: usize = 256;

/// Tolerance for the rate-continuity invariants, scaled to the peak rate.
fn continuity_slack(peak: f64) -> f64 {
    1e-9 * peak.abs().max(1.0)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// `1 - e^{-x}` without cancellation for small `x`.
pub(crate) fn one_minus_exp_neg(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// Parameters of the exponential model: ramp `e^{a t} - 1`, decay with rate
/// constant `b` reaching zero after `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialParams {
    pub a: f64,
    pub b: f64,
    pub t0: f64,
    #[serde(rename = "T")]
    pub decay_time: f64,
}

impl ExponentialParams {
    pub fn new(a: f64, b: f64, t0: f64, decay_time: f64) -> Result<Self> {
        let p = ExponentialParams {
            a,
            b,
            t0,
            decay_time,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("a", self.a)?;
        check_positive("b", self.b)?;
        check_positive("t0", self.t0)?;
        check_positive("T", self.decay_time)
    }

    /// Plateau rate `e^{a t0} - 1`.
    pub fn peak_rate(&self) -> f64 {
        (self.a * self.t0).exp_m1()
    }

    /// Amplitude `C = (e^{a t0} - 1) / (1 - e^{-bT})` of the decay branch.
    pub fn decay_amplitude(&self) -> f64 {
        self.peak_rate() / one_minus_exp_neg(self.b * self.decay_time)
    }
}

/// Parameters of the linear model: ramp `(a / t0) t`, plateau `a`, linear
/// decay to zero over `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub a: f64,
    pub t0: f64,
    #[serde(rename = "T")]
    pub decay_time: f64,
}

impl LinearParams {
    pub fn new(a: f64, t0: f64, decay_time: f64) -> Result<Self> {
        let p = LinearParams { a, t0, decay_time };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("a", self.a)?;
        check_positive("t0", self.t0)?;
        check_positive("T", self.decay_time)
    }
}

/// Where a profile came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileKind {
    Exponential(ExponentialParams),
    Linear(LinearParams),
    Tabulated,
    Custom,
}

#[derive(Clone)]
pub struct SupplyProfile {
    ramp: RateFn,
    t0: f64,
    decay: RateFn,
    decay_time: f64,
    kind: ProfileKind,
}

impl fmt::Debug for SupplyProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SupplyProfile")
            .field("kind", &self.kind)
            .field("t0", &self.t0)
            .field("T", &self.decay_time)
            .field("peak_rate", &self.plateau_rate())
            .finish()
    }
}

impl SupplyProfile {
    /// Builds a profile from a ramp `f` on `[0, t0]` and a decay shape `h` on
    /// `[0, T]`, checking `f(0) = 0`, `h(0) = f(t0)`, `h(T) = 0` and sampled
    /// monotonicity of both pieces.
    pub fn new(ramp: RateFn, t0: f64, decay: RateFn, decay_time: f64) -> Result<Self> {
        Self::with_kind(ramp, t0, decay, decay_time, ProfileKind::Custom)
    }

    fn with_kind(ramp: RateFn, t0: f64, decay: RateFn, decay_time: f64, kind: ProfileKind) -> Result<Self> {
        check_positive("t0", t0)?;
        check_positive("T", decay_time)?;
        let profile = SupplyProfile {
            ramp,
            t0,
            decay,
            decay_time,
            kind,
        };
        profile.check_invariants()?;
        Ok(profile)
    }

    fn check_invariants(&self) -> Result<()> {
        let f0 = (self.ramp)(0.0);
        if !(f0.abs() <= 1e-12) {
            return Err(Error::InvalidParams(format!("ramp must start at rate 0, f(0)={f0}")));
        }
        let peak = self.plateau_rate();
        if !peak.is_finite() {
            return Err(Error::NonFinite { at: self.t0, value: peak });
        }
        let h0 = (self.decay)(0.0);
        if !((h0 - peak).abs() <= continuity_slack(peak)) {
            return Err(Error::ContinuityMismatch {
                ramp_end: peak,
                decay_start: h0,
            });
        }
        let h_end = (self.decay)(self.decay_time);
        if !(h_end.abs() <= continuity_slack(peak)) {
            return Err(Error::InvalidParams(format!(
                "decay must reach rate 0 at T={}, h(T)={h_end}",
                self.decay_time
            )));
        }

        let slack = 1e-12 * peak.abs().max(1.0);
        let sample = |g: &RateFn, len: f64, increasing: bool, what: &str| -> Result<()> {
            let mut prev = g(0.0);
            for i in 1..=MONOTONE_SAMPLES {
                let t = len * i as f64 / MONOTONE_SAMPLES as f64;
                let v = g(t);
                if !v.is_finite() {
                    return Err(Error::NonFinite { at: t, value: v });
                }
                let violated = if increasing { v < prev - slack } else { v > prev + slack };
                if violated {
                    return Err(Error::NonMonotoneSamples(format!(
                        "{what} changes direction near t={t}"
                    )));
                }
                prev = v;
            }
            Ok(())
        };
        sample(&self.ramp, self.t0, true, "ramp")?;
        sample(&self.decay, self.decay_time, false, "decay")
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Duration `T` of the decay after switch-off.
    pub fn decay_time(&self) -> f64 {
        self.decay_time
    }

    pub fn ramp_rate(&self, t: f64) -> f64 {
        (self.ramp)(t.clamp(0.0, self.t0))
    }

    /// `f(t0)`, the stabilized rate.
    pub fn plateau_rate(&self) -> f64 {
        (self.ramp)(self.t0)
    }

    /// Post-switch-off rate `h(u)` at elapsed time `u`, zero after `T`.
    pub fn decay_rate(&self, u: f64) -> f64 {
        if u > self.decay_time {
            0.0
        } else {
            (self.decay)(u.max(0.0))
        }
    }

    fn check_switch_off(&self, t1: f64) -> Result<()> {
        if t1 >= self.t0 && t1.is_finite() {
            Ok(())
        } else {
            Err(Error::SwitchOffBeforePeak { t1, t0: self.t0 })
        }
    }

    /// Supply rate at time `t` when the device is switched off at `t1`.
    pub fn rate_at(&self, t1: f64, t: f64) -> Result<f64> {
        self.check_switch_off(t1)?;
        if !(t >= 0.0) {
            return Err(Error::InvalidParams(format!("time must be non-negative, got {t}")));
        }
        Ok(self.rate_unchecked(t1, t))
    }

    fn rate_unchecked(&self, t1: f64, t: f64) -> f64 {
        if t <= self.t0 {
            (self.ramp)(t)
        } else if t <= t1 {
            self.plateau_rate()
        } else if t <= t1 + self.decay_time {
            (self.decay)((t - t1).min(self.decay_time))
        } else {
            0.0
        }
    }

    /// Time `t1 + T` at which the supply dies out.
    pub fn extinction_time(&self, t1: f64) -> Result<f64> {
        self.check_switch_off(t1)?;
        Ok(t1 + self.decay_time)
    }

    /// Kinks of the rate for switch-off time `t1`.
    pub fn breakpoints(&self, t1: f64) -> [f64; 3] {
        [self.t0, t1, t1 + self.decay_time]
    }

    /// Energy delivered on `[0, t]` with switch-off at `t1`.
    pub fn cumulative_energy(&self, t1: f64, t: f64, tol: Tolerance) -> Result<f64> {
        self.check_switch_off(t1)?;
        if !(t >= 0.0) {
            return Err(Error::InvalidParams(format!("time must be non-negative, got {t}")));
        }
        let end = t.min(t1 + self.decay_time);
        let q = integrate_with_breakpoints(
            |s| self.rate_unchecked(t1, s),
            Interval::new(0.0, end)?,
            &self.breakpoints(t1),
            tol,
        )?;
        Ok(q.value)
    }

    /// `F(t0)`: energy delivered during the ramp.
    pub fn ramp_energy(&self, tol: Tolerance) -> Result<f64> {
        Ok(integrate(|t| (self.ramp)(t), Interval::new(0.0, self.t0)?, tol)?.value)
    }

    /// `H(T)`: energy delivered after switch-off.
    pub fn decay_energy(&self, tol: Tolerance) -> Result<f64> {
        Ok(integrate(|u| (self.decay)(u), Interval::new(0.0, self.decay_time)?, tol)?.value)
    }
}

pub fn exponential_profile(p: ExponentialParams) -> Result<SupplyProfile> {
    p.validate()?;
    let a = p.a;
    let b = p.b;
    let peak = p.peak_rate();
    let denom = one_minus_exp_neg(b * p.decay_time);
    let bt = b * p.decay_time;
    // e^{-bu} - e^{-bT} written as a difference of expm1 terms so that
    // h(0) = f(t0) and h(T) = 0 hold bit-exactly.
    let decay: RateFn = Arc::new(move |u: f64| peak * ((-b * u).exp_m1() - (-bt).exp_m1()) / denom);
    SupplyProfile::with_kind(
        Arc::new(move |t: f64| (a * t).exp_m1()),
        p.t0,
        decay,
        p.decay_time,
        ProfileKind::Exponential(p),
    )
}

pub fn linear_profile(p: LinearParams) -> Result<SupplyProfile> {
    p.validate()?;
    let LinearParams { a, t0, decay_time } = p;
    SupplyProfile::with_kind(
        Arc::new(move |t: f64| a / t0 * t),
        t0,
        Arc::new(move |u: f64| a * (1.0 - u / decay_time)),
        decay_time,
        ProfileKind::Linear(p),
    )
}

fn interpolate(samples: &[(f64, f64)], t: f64) -> f64 {
    let last = samples.len() - 1;
    if t <= samples[0].0 {
        return samples[0].1;
    }
    if t >= samples[last].0 {
        return samples[last].1;
    }
    let i = samples.partition_point(|&(ts, _)| ts <= t);
    let (t_lo, r_lo) = samples[i - 1];
    let (t_hi, r_hi) = samples[i];
    r_lo + (r_hi - r_lo) * (t - t_lo) / (t_hi - t_lo)
}

fn check_samples(samples: &[(f64, f64)], what: &'static str, increasing_rate: bool) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptySamples(what));
    }
    if samples.len() < 2 {
        return Err(Error::InvalidParams(format!("{what} needs at least two samples")));
    }
    for &(t, r) in samples {
        if !t.is_finite() || !r.is_finite() {
            return Err(Error::NonFinite { at: t, value: r });
        }
        if r < 0.0 {
            return Err(Error::InvalidParams(format!("{what} rate {r} at t={t} is negative")));
        }
    }
    for w in samples.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::NonMonotoneSamples(format!(
                "{what} times must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
        let bad = if increasing_rate { w[1].1 < w[0].1 } else { w[1].1 > w[0].1 };
        if bad {
            return Err(Error::NonMonotoneSamples(format!(
                "{what} rate {} at t={} breaks monotonicity",
                w[1].1, w[1].0
            )));
        }
    }
    if samples[0].0 != 0.0 {
        return Err(Error::InvalidParams(format!("{what} samples must start at t=0")));
    }
    Ok(())
}

/// Piecewise-linear profile through measured samples. Ramp times run from 0
/// to `t0`; decay times are elapsed since switch-off and run from 0 to `T`.
pub fn tabulated_profile(ramp: &[(f64, f64)], decay: &[(f64, f64)]) -> Result<SupplyProfile> {
    check_samples(ramp, "ramp", true)?;
    check_samples(decay, "decay", false)?;
    if ramp[0].1 != 0.0 {
        return Err(Error::InvalidParams("ramp must start at (0, 0)".into()));
    }
    let decay_end = decay[decay.len() - 1];
    if decay_end.1 != 0.0 {
        return Err(Error::InvalidParams(format!(
            "decay must end at rate 0, got {}",
            decay_end.1
        )));
    }
    let peak = ramp[ramp.len() - 1].1;
    let h0 = decay[0].1;
    if (peak - h0).abs() > 1e-6 * peak.abs().max(h0.abs()) {
        return Err(Error::ContinuityMismatch {
            ramp_end: peak,
            decay_start: h0,
        });
    }

    let ramp_samples = ramp.to_vec();
    let mut decay_samples = decay.to_vec();
    // snap the tolerated mismatch so continuity at switch-off is exact
    decay_samples[0].1 = peak;
    let t0 = ramp_samples[ramp_samples.len() - 1].0;
    SupplyProfile::with_kind(
        Arc::new(move |t| interpolate(&ramp_samples, t)),
        t0,
        Arc::new(move |u| interpolate(&decay_samples, u)),
        decay_end.0,
        ProfileKind::Tabulated,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn canonical_exp() -> SupplyProfile {
        exponential_profile(ExponentialParams::new(1.0, 1.0, LN_2, LN_2).unwrap()).unwrap()
    }

    fn canonical_lin() -> SupplyProfile {
        linear_profile(LinearParams::new(2.0, 1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn exponential_shape_values() {
        let p = canonical_exp();
        assert!((p.plateau_rate() - 1.0).abs() < 1e-15);
        assert_eq!(p.decay_rate(LN_2), 0.0);
        // 2(1/sqrt2 - 1/2)
        assert!((p.decay_rate(LN_2 / 2.0) - 0.414_213_562_373_095_1).abs() < 1e-12);
        assert_eq!(p.decay_rate(0.0), p.plateau_rate());
    }

    #[test]
    fn linear_shape_values() {
        let p = canonical_lin();
        assert_eq!(p.ramp_rate(0.5), 1.0);
        assert_eq!(p.decay_rate(0.0), 2.0);
        assert_eq!(p.decay_rate(0.75), 0.5);
    }

    #[test]
    fn invalid_params() {
        assert!(ExponentialParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ExponentialParams::new(1.0, f64::NAN, 1.0, 1.0).is_err());
        assert!(LinearParams::new(2.0, -1.0, 1.0).is_err());
        let bad = ExponentialParams { a: 1.0, b: -1.0, t0: 1.0, decay_time: 1.0 };
        assert_eq!(exponential_profile(bad).unwrap_err().kind(), "InvalidParams");
    }

    #[test]
    fn rate_at_regions() {
        let p = canonical_exp();
        let t1 = 3.0 * LN_2;
        assert_eq!(p.rate_at(t1, 0.0).unwrap(), 0.0);
        assert!((p.rate_at(t1, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(p.rate_at(t1, 4.0 * LN_2 + 1.0).unwrap(), 0.0);
        assert_eq!(
            p.rate_at(0.5, 1.0).unwrap_err(),
            Error::SwitchOffBeforePeak { t1: 0.5, t0: LN_2 }
        );
        assert!(p.rate_at(t1, -1.0).is_err());
    }

    #[test]
    fn cumulative_energy_values() {
        let p = canonical_exp();
        let tol = Tolerance::default();
        let e = p.cumulative_energy(3.0 * LN_2, LN_2, tol).unwrap();
        assert!((e - (1.0 - LN_2)).abs() < 1e-12);
        assert_eq!(p.cumulative_energy(3.0 * LN_2, 0.0, tol).unwrap(), 0.0);

        let l = canonical_lin();
        // 1 (ramp) + 3 (plateau) + 1 (decay)
        let e = l.cumulative_energy(2.5, 3.5, tol).unwrap();
        assert!((e - 5.0).abs() < 1e-12);
        assert_eq!(l.cumulative_energy(2.5, 10.0, tol).unwrap(), e);
    }

    #[test]
    fn extinction() {
        let p = canonical_exp();
        assert!((p.extinction_time(3.0 * LN_2).unwrap() - 4.0 * LN_2).abs() < 1e-15);
        let l = canonical_lin();
        assert_eq!(l.extinction_time(2.5).unwrap(), 3.5);
        assert!(matches!(l.extinction_time(0.5), Err(Error::SwitchOffBeforePeak { .. })));
    }

    #[test]
    fn tabulated_matches_linear() {
        let tab = tabulated_profile(&[(0.0, 0.0), (1.0, 2.0)], &[(0.0, 2.0), (1.0, 0.0)]).unwrap();
        let lin = canonical_lin();
        assert_eq!(tab.t0(), 1.0);
        assert_eq!(tab.decay_time(), 1.0);
        for i in 0..=400 {
            let t = i as f64 * 0.01;
            let (a, b) = (tab.rate_at(2.0, t).unwrap(), lin.rate_at(2.0, t).unwrap());
            assert!((a - b).abs() < 1e-14, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn tabulated_errors() {
        let decay = [(0.0, 2.0), (1.0, 0.0)];
        assert!(matches!(
            tabulated_profile(&[(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)], &decay),
            Err(Error::NonMonotoneSamples(_))
        ));
        assert!(matches!(
            tabulated_profile(&[(0.0, 0.0), (1.0, 2.0)], &[(0.0, 3.0), (1.0, 0.0)]),
            Err(Error::ContinuityMismatch { .. })
        ));
        assert!(matches!(tabulated_profile(&[], &decay), Err(Error::EmptySamples(_))));
        assert!(matches!(
            tabulated_profile(&[(0.0, 0.0), (0.0, 2.0)], &decay),
            Err(Error::NonMonotoneSamples(_))
        ));
        assert!(tabulated_profile(&[(0.0, 0.5), (1.0, 2.0)], &decay).is_err());
        assert!(tabulated_profile(&[(0.0, 0.0), (1.0, 2.0)], &[(0.0, 2.0), (1.0, 0.1)]).is_err());
    }

    #[test]
    fn tabulated_tolerates_tiny_mismatch() {
        let p = tabulated_profile(&[(0.0, 0.0), (1.0, 2.0)], &[(0.0, 2.000_000_1), (1.0, 0.0)]).unwrap();
        assert_eq!(p.decay_rate(0.0), 2.0);
    }

    #[test]
    fn custom_profile_invariants() {
        let ok = SupplyProfile::new(
            Arc::new(|t: f64| t * t),
            2.0,
            Arc::new(|u: f64| 4.0 - 2.0 * u),
            2.0,
        );
        assert!(ok.is_ok());
        let discontinuous = SupplyProfile::new(Arc::new(|t: f64| t), 1.0, Arc::new(|u: f64| 2.0 - 2.0 * u), 1.0);
        assert!(matches!(discontinuous, Err(Error::ContinuityMismatch { .. })));
        let bumpy = SupplyProfile::new(
            Arc::new(|t: f64| (3.0 * t).sin().abs()),
            2.0,
            Arc::new(move |u: f64| 6f64.sin().abs() * (1.0 - u)),
            1.0,
        );
        assert!(matches!(bumpy, Err(Error::NonMonotoneSamples(_))));
        let offset = SupplyProfile::new(Arc::new(|t: f64| t + 1.0), 1.0, Arc::new(|u: f64| 2.0 * (1.0 - u)), 1.0);
        assert!(offset.is_err());
    }
}
