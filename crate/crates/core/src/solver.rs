//! Optimal switch-off time.
//!
//! At the optimum the supply dies out exactly when the demanded energy has
//! been delivered, so `t2 = t1_hat + T` and the energy balance
//!
//! ```text
//! F(t0) + f(t0) (t1_hat - t0) + H(T) = Q
//! ```
//!
//! determines `t1_hat`, where `F` and `H` are the energies of the ramp and of
//! the decay. The closed forms for the exponential and linear models, the
//! quadrature-based solver for arbitrary profiles, and the nested solver for
//! general rate families all compute the same quantity by different routes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate_with_breakpoints, try_find_root, Interval, Tolerance};
use crate::profiles::{
    exponential_profile, linear_profile, one_minus_exp_neg, ExponentialParams, LinearParams, SupplyProfile,
};

/// Number of doublings allowed when growing the default switch-off bracket.
const MAX_BRACKET_DOUBLINGS: usize = 60;

/// Demanded energy `Q > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergyDemand(f64);

impl EnergyDemand {
    pub fn new(q: f64) -> Result<Self> {
        if q > 0.0 && q.is_finite() {
            Ok(EnergyDemand(q))
        } else {
            Err(Error::InvalidParams(format!("Q must be positive and finite, got {q}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Energy for complete phase transition of mass `m` with latent heat `lv`.
pub fn latent_heat_demand(m: f64, lv: f64) -> Result<EnergyDemand> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidParams(format!("mass must be positive, got {m}")));
    }
    if !(lv > 0.0 && lv.is_finite()) {
        return Err(Error::InvalidParams(format!("latent heat must be positive, got {lv}")));
    }
    EnergyDemand::new(m * lv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedFormExponential,
    ClosedFormLinear,
    #[serde(rename = "theorem1")]
    EnergyBalance,
    #[serde(rename = "theorem2")]
    NestedFamily,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ClosedFormExponential => "closed_form_exponential",
            Method::ClosedFormLinear => "closed_form_linear",
            Method::EnergyBalance => "theorem1",
            Method::NestedFamily => "theorem2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchOffSolution {
    pub t1_hat: f64,
    /// Time at which the delivered energy reaches `Q`.
    pub t2: f64,
    pub y: f64,
    /// Delivered energy on `[0, t2]` minus `Q`, by independent quadrature.
    #[serde(rename = "residual")]
    pub delivered_residual: f64,
    pub method: Method,
    pub feasible: bool,
}

/// Accepts `t1_hat` values that undershoot `t0` by rounding only, and maps
/// genuine undershoots to `QTooSmall`.
fn feasible_switch_off(t1_hat: f64, t0: f64, demand: f64, minimum: f64) -> Result<f64> {
    if !t1_hat.is_finite() {
        return Err(Error::NonFinite { at: t0, value: t1_hat });
    }
    if t1_hat >= t0 {
        return Ok(t1_hat);
    }
    if t0 - t1_hat <= 1e-12 * t0.abs().max(1.0) {
        return Ok(t0);
    }
    Err(Error::QTooSmall {
        demand,
        minimum,
        ramp_time: None,
    })
}

fn profile_solution(
    profile: &SupplyProfile,
    t1_hat: f64,
    q: EnergyDemand,
    method: Method,
    tol: Tolerance,
) -> Result<SwitchOffSolution> {
    let t2 = profile.extinction_time(t1_hat)?;
    let delivered = profile.cumulative_energy(t1_hat, t2, tol)?;
    Ok(SwitchOffSolution {
        t1_hat,
        t2,
        y: t2 - t1_hat,
        delivered_residual: delivered - q.value(),
        method,
        feasible: t1_hat >= profile.t0(),
    })
}

/// Constants of the exponential model's switch-off relation
/// `t1 = L0 + L1 e^{-b y} + L2 y` with `y = t2 - t1`.
///
/// `l2_uncorrected = 1 / (1 - e^{-bT})` is the coefficient as usually quoted for
/// this model; expanding the energy integral gives
/// `l2_consistent = e^{-bT} / (1 - e^{-bT})`, which is the one the solver
/// uses. The two differ by exactly one, which shifts `t1_hat` by `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialConstants {
    pub l0: f64,
    pub l1: f64,
    pub l2_uncorrected: f64,
    pub l2_consistent: f64,
    /// Decay rate constant `b`, needed to evaluate the relation.
    pub b: f64,
}

impl ExponentialConstants {
    /// Switch-off time for which the energy is reached `y` after switch-off.
    pub fn switch_off_time(&self, y: f64) -> f64 {
        self.l0 + self.l1 * (-self.b * y).exp() + self.l2_consistent * y
    }

    /// Same relation evaluated with the uncorrected `L2`.
    pub fn uncorrected_switch_off_time(&self, y: f64) -> f64 {
        self.l0 + self.l1 * (-self.b * y).exp() + self.l2_uncorrected * y
    }
}

pub fn exponential_constants(p: ExponentialParams, q: EnergyDemand) -> Result<ExponentialConstants> {
    p.validate()?;
    let ExponentialParams { a, b, t0, decay_time } = p;
    let peak = p.peak_rate();
    let growth = peak + 1.0;
    let denom = one_minus_exp_neg(b * decay_time);
    let l1 = 1.0 / (b * denom);
    let l0 = (q.value() + 1.0 / a - growth / a + growth * t0 - peak / denom / b) / peak;
    let l2_uncorrected = 1.0 / denom;
    Ok(ExponentialConstants {
        l0,
        l1,
        l2_uncorrected,
        l2_consistent: l2_uncorrected * (-b * decay_time).exp(),
        b,
    })
}

/// `x / (e^x - 1) - 1`, which tends to `-x/2` as `x -> 0`.
fn relative_shortfall(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        -0.5 * x + x2 / 12.0 - x2 * x2 / 720.0
    } else {
        x / x.exp_m1() - 1.0
    }
}

/// `t0 - t1` lost to the ramp and the decay relative to running at the peak
/// rate, i.e. `(t0 e^{a t0} / K - 1/a) - t0` plus the decay counterpart.
/// Grouping the terms this way keeps `L0 + L1 e^{-bT}` free of the
/// cancellation between two `O(1/b)` constants.
fn exponential_lag(p: ExponentialParams) -> f64 {
    relative_shortfall(p.a * p.t0) / p.a + relative_shortfall(p.b * p.decay_time) / p.b
}

/// Smallest demand the exponential model can meet with `t1 >= t0`.
pub fn exponential_minimum_demand(p: ExponentialParams) -> f64 {
    -p.peak_rate() * exponential_lag(p)
}

pub fn solve_exponential(p: ExponentialParams, q: EnergyDemand) -> Result<SwitchOffSolution> {
    p.validate()?;
    // L0 + L1 e^{-bT} + L2 T, regrouped
    let t1 = q.value() / p.peak_rate() + p.t0 + exponential_lag(p);
    let t1_hat = feasible_switch_off(t1, p.t0, q.value(), exponential_minimum_demand(p))?;
    let profile = exponential_profile(p)?;
    profile_solution(&profile, t1_hat, q, Method::ClosedFormExponential, Tolerance::default())
}

pub fn solve_linear(p: LinearParams, q: EnergyDemand) -> Result<SwitchOffSolution> {
    p.validate()?;
    let LinearParams { a, t0, decay_time } = p;
    let slack = q.value() / a - 0.5 * decay_time - 0.5 * t0;
    if slack < 0.0 {
        return Err(Error::QTooSmall {
            demand: q.value(),
            minimum: 0.5 * a * (t0 + decay_time),
            ramp_time: None,
        });
    }
    let t1_hat = -0.5 * decay_time + q.value() / a + 0.5 * t0;
    let profile = linear_profile(p)?;
    let mut sol = profile_solution(&profile, t1_hat.max(t0), q, Method::ClosedFormLinear, Tolerance::default())?;
    sol.t2 = 0.5 * t0 + q.value() / a + 0.5 * decay_time;
    sol.y = sol.t2 - sol.t1_hat;
    Ok(sol)
}

/// Energy-balance solver for an arbitrary profile: `F(t0)` and `H(T)` by
/// quadrature, then the balance is linear in `t1_hat`.
pub fn solve_general(profile: &SupplyProfile, q: EnergyDemand, tol: Tolerance) -> Result<SwitchOffSolution> {
    let plateau = profile.plateau_rate();
    if !(plateau > 0.0) {
        return Err(Error::DegenerateProfile { plateau_rate: plateau });
    }
    let ramp = profile.ramp_energy(tol)?;
    let decay = profile.decay_energy(tol)?;
    let t1 = profile.t0() + (q.value() - ramp - decay) / plateau;
    let t1_hat = feasible_switch_off(t1, profile.t0(), q.value(), ramp + decay)?;
    profile_solution(profile, t1_hat, q, Method::EnergyBalance, tol)
}

/// Time at which `Q` is delivered if the device is never switched off.
///
/// When `Q` is already met during the ramp the result is
/// `QTooSmall` carrying the ramp-phase completion time in `ramp_time`.
pub fn no_switchoff_time(profile: &SupplyProfile, q: EnergyDemand) -> Result<f64> {
    let tol = Tolerance::default();
    let ramp = profile.ramp_energy(tol)?;
    let plateau = profile.plateau_rate();
    if q.value() >= ramp {
        if !(plateau > 0.0) {
            return Err(Error::DegenerateProfile { plateau_rate: plateau });
        }
        return Ok(profile.t0() + (q.value() - ramp) / plateau);
    }
    let ramp_time = try_find_root(
        |t| {
            let e = profile.cumulative_energy(profile.t0(), t, tol)?;
            Ok(e - q.value())
        },
        Interval::new(0.0, profile.t0())?,
        tol,
    )?;
    Err(Error::QTooSmall {
        demand: q.value(),
        minimum: ramp,
        ramp_time: Some(ramp_time),
    })
}

pub type FamilyRate = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type FamilyTime = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FamilyBreakpoints = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

#[derive(Clone, Copy, Debug)]
enum SwitchOffDomain {
    Fixed(Interval),
    /// Start at `t0` and grow until the residual changes sign.
    Auto { t0: f64, plateau_rate: f64, decay_time: f64 },
}

/// A family of supply rates `r(t; t1)` indexed by the switch-off time, with
/// the time `extinction(t1)` at which each member dies out.
#[derive(Clone)]
pub struct EnergyFamily {
    rate: FamilyRate,
    extinction: FamilyTime,
    breakpoints: Option<FamilyBreakpoints>,
    domain: SwitchOffDomain,
}

impl std::fmt::Debug for EnergyFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnergyFamily").field("domain", &self.domain).finish_non_exhaustive()
    }
}

impl EnergyFamily {
    /// `rate(t, t1)` is the supply rate at time `t` for switch-off time `t1`.
    pub fn new<R, X>(rate: R, extinction: X, t1_domain: Interval) -> Self
    where
        R: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        X: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        EnergyFamily {
            rate: Arc::new(rate),
            extinction: Arc::new(extinction),
            breakpoints: None,
            domain: SwitchOffDomain::Fixed(t1_domain),
        }
    }

    /// The family `{rate_at(profile, t1, ·)}`, searched from `t0` upwards.
    pub fn from_profile(profile: &SupplyProfile) -> Self {
        let p = profile.clone();
        let q = profile.clone();
        let decay_time = profile.decay_time();
        let t0 = profile.t0();
        EnergyFamily {
            rate: Arc::new(move |t, t1| p.rate_at(t1.max(t0), t).unwrap_or(0.0)),
            extinction: Arc::new(move |t1| t1 + decay_time),
            breakpoints: Some(Arc::new(move |t1| q.breakpoints(t1).to_vec())),
            domain: SwitchOffDomain::Auto {
                t0,
                plateau_rate: profile.plateau_rate(),
                decay_time,
            },
        }
    }

    pub fn with_domain(mut self, t1_domain: Interval) -> Self {
        self.domain = SwitchOffDomain::Fixed(t1_domain);
        self
    }

    /// Known kinks of `r(·; t1)`; quadrature splits there.
    pub fn with_breakpoints<B>(mut self, breakpoints: B) -> Self
    where
        B: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.breakpoints = Some(Arc::new(breakpoints));
        self
    }

    pub fn rate(&self, t: f64, t1: f64) -> f64 {
        (self.rate)(t, t1)
    }

    pub fn extinction(&self, t1: f64) -> f64 {
        (self.extinction)(t1)
    }

    /// `E_{t1}(extinction(t1))`, the total energy of one member.
    pub fn total_energy(&self, t1: f64, tol: Tolerance) -> Result<f64> {
        let end = self.extinction(t1);
        let cuts = self.breakpoints.as_ref().map(|b| b(t1)).unwrap_or_default();
        let q = integrate_with_breakpoints(|t| self.rate(t, t1), Interval::new(0.0, end)?, &cuts, tol)?;
        Ok(q.value)
    }

    /// Sampled check of the family invariants over `domain`: nonnegative
    /// rates, extinction at `extinction(t1)`, and total energy strictly
    /// increasing in `t1`.
    pub fn check_invariants(&self, domain: Interval, tol: Tolerance) -> Result<()> {
        const SAMPLES: usize = 5;
        let mut prev: Option<f64> = None;
        for i in 0..SAMPLES {
            let t1 = domain.lo + domain.width() * i as f64 / (SAMPLES - 1) as f64;
            let end = self.extinction(t1);
            if !(end.is_finite() && end >= 0.0) {
                return Err(Error::InvalidParams(format!("extinction({t1}) = {end} is not a valid time")));
            }
            let scale = (0..=16)
                .map(|k| self.rate(end * k as f64 / 16.0, t1))
                .try_fold(0.0f64, |m, r| {
                    if r.is_finite() && r >= -1e-12 {
                        Ok(m.max(r.abs()))
                    } else {
                        Err(Error::InvalidParams(format!("rate {r} at t1={t1} is negative or non-finite")))
                    }
                })?;
            let at_end = self.rate(end, t1);
            if at_end.abs() > 1e-9 * scale.max(1.0) {
                return Err(Error::InvalidParams(format!(
                    "rate does not vanish at extinction({t1}) = {end}: {at_end}"
                )));
            }
            let total = self.total_energy(t1, tol)?;
            if let Some(p) = prev {
                if domain.width() > 0.0 && total <= p {
                    return Err(Error::InvalidParams(format!(
                        "total energy is not increasing in t1 near t1={t1}"
                    )));
                }
            }
            prev = Some(total);
        }
        Ok(())
    }
}

/// Nested solver for a general rate family: for each candidate `t1` the
/// completion time is where the rate vanishes, and the outer root finder
/// drives the delivered energy at that time to `Q`.
pub fn solve_family(family: &EnergyFamily, q: EnergyDemand, tol: Tolerance) -> Result<SwitchOffSolution> {
    let residual = |t1: f64| -> Result<f64> { Ok(family.total_energy(t1, tol)? - q.value()) };

    let bracket = match family.domain {
        SwitchOffDomain::Fixed(domain) => domain,
        SwitchOffDomain::Auto {
            t0,
            plateau_rate,
            decay_time,
        } => {
            if !(plateau_rate > 0.0) {
                return Err(Error::DegenerateProfile { plateau_rate });
            }
            let r_lo = residual(t0)?;
            if r_lo > 0.0 {
                return Err(Error::QTooSmall {
                    demand: q.value(),
                    minimum: r_lo + q.value(),
                    ramp_time: None,
                });
            }
            let mut width = 10.0 * (q.value() / plateau_rate + decay_time);
            let mut doublings = 0;
            while residual(t0 + width)? < 0.0 && doublings < MAX_BRACKET_DOUBLINGS {
                width *= 2.0;
                doublings += 1;
            }
            Interval::new(t0, t0 + width)?
        }
    };
    family.check_invariants(bracket, tol)?;

    let t1_hat = try_find_root(residual, bracket, tol)?;
    let t2 = family.extinction(t1_hat);
    Ok(SwitchOffSolution {
        t1_hat,
        t2,
        y: t2 - t1_hat,
        delivered_residual: residual(t1_hat)?,
        method: Method::NestedFamily,
        feasible: t1_hat >= bracket.lo,
    })
}
