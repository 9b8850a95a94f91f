//! Noisy supply line.
//!
//! On each phase the rate follows the affine Itô equation
//!
//! ```text
//! dφ = (c1 φ + c2) dt + (c3 φ + c4) dB
//! ```
//!
//! The Itô integral has zero mean, so the mean rate solves the drift ODE alone
//! and the optimal switch-off time of the noisy line is the deterministic one
//! computed for the mean profile. Paths are simulated with Euler–Maruyama on a
//! grid snapped to the phase boundaries.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{NormalStream, Tolerance};
use crate::profiles::{ExponentialParams, SupplyProfile};
use crate::solver::{solve_general, EnergyDemand, SwitchOffSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseRole {
    Ramp,
    Plateau,
    Decay,
    Extinct,
    Other,
}

/// Coefficients of the affine SDE on `[start, end)`. The final phase may be
/// open (`end = +inf`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinePhase {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub start: f64,
    pub end: f64,
    pub role: PhaseRole,
}

impl AffinePhase {
    pub fn new(c1: f64, c2: f64, c3: f64, c4: f64, start: f64, end: f64) -> Self {
        AffinePhase {
            c1,
            c2,
            c3,
            c4,
            start,
            end,
            role: PhaseRole::Other,
        }
    }

    fn drift(&self, phi: f64) -> f64 {
        self.c1 * phi + self.c2
    }

    fn diffusion(&self, phi: f64) -> f64 {
        self.c3 * phi + self.c4
    }
}

/// Diffusion coefficients `(c3, c4)` of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Noise {
    pub c3: f64,
    pub c4: f64,
}

/// Noise applied to the ramp, plateau and decay phases of a profile. The
/// extinct phase after `t1 + T` stays noise-free.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseNoise {
    pub ramp: Noise,
    pub plateau: Noise,
    pub decay: Noise,
}

impl PhaseNoise {
    pub fn uniform(c3: f64, c4: f64) -> Self {
        let n = Noise { c3, c4 };
        PhaseNoise {
            ramp: n,
            plateau: n,
            decay: n,
        }
    }

    fn for_role(&self, role: PhaseRole) -> Option<Noise> {
        match role {
            PhaseRole::Ramp => Some(self.ramp),
            PhaseRole::Plateau => Some(self.plateau),
            PhaseRole::Decay => Some(self.decay),
            PhaseRole::Extinct | PhaseRole::Other => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffineSde {
    phases: Vec<AffinePhase>,
    initial_value: f64,
}

impl PiecewiseAffineSde {
    /// Phases must start at 0, be contiguous, and only the last may be open.
    pub fn new(phases: Vec<AffinePhase>, initial_value: f64) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::InvalidParams("an SDE needs at least one phase".into()));
        }
        if !initial_value.is_finite() {
            return Err(Error::InvalidParams(format!("initial value {initial_value} is not finite")));
        }
        if phases[0].start != 0.0 {
            return Err(Error::InvalidParams("the first phase must start at t=0".into()));
        }
        let last = phases.len() - 1;
        for (i, ph) in phases.iter().enumerate() {
            if ![ph.c1, ph.c2, ph.c3, ph.c4, ph.start].iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidParams(format!("phase {i} has non-finite coefficients")));
            }
            if !(ph.start < ph.end) || (i < last && !ph.end.is_finite()) || ph.end.is_nan() {
                return Err(Error::InvalidParams(format!(
                    "phase {i} spans an invalid interval [{}, {})",
                    ph.start, ph.end
                )));
            }
            if i < last && phases[i + 1].start != ph.end {
                return Err(Error::InvalidParams(format!(
                    "phases {i} and {} are not contiguous",
                    i + 1
                )));
            }
        }
        Ok(PiecewiseAffineSde { phases, initial_value })
    }

    pub fn phases(&self) -> &[AffinePhase] {
        &self.phases
    }

    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    /// End of the covered time range (possibly infinite).
    pub fn horizon(&self) -> f64 {
        self.phases[self.phases.len() - 1].end
    }

    /// Sets `(c3, c4)` on the ramp, plateau and decay phases.
    pub fn with_noise(mut self, noise: PhaseNoise) -> Self {
        for ph in &mut self.phases {
            if let Some(n) = noise.for_role(ph.role) {
                ph.c3 = n.c3;
                ph.c4 = n.c4;
            }
        }
        self
    }

    /// Same drift, all diffusion coefficients zeroed.
    pub fn without_noise(mut self) -> Self {
        for ph in &mut self.phases {
            ph.c3 = 0.0;
            ph.c4 = 0.0;
        }
        self
    }
}

/// Drift coefficients that reproduce the exponential model's rate for
/// switch-off time `t1`: ramp `(a, a)`, plateau `(0, 0)`, decay
/// `(-b, -b C e^{-bT})`, then an extinct phase with zero rate. A plateau of
/// zero length is omitted.
pub fn phases_from_profile(p: ExponentialParams, t1: f64) -> Result<PiecewiseAffineSde> {
    p.validate()?;
    if !(t1 >= p.t0 && t1.is_finite()) {
        return Err(Error::SwitchOffBeforePeak { t1, t0: p.t0 });
    }
    let tagged = |c1, c2, start, end, role| AffinePhase {
        role,
        ..AffinePhase::new(c1, c2, 0.0, 0.0, start, end)
    };
    let mut phases = vec![tagged(p.a, p.a, 0.0, p.t0, PhaseRole::Ramp)];
    if t1 > p.t0 {
        phases.push(tagged(0.0, 0.0, p.t0, t1, PhaseRole::Plateau));
    }
    let extinction = t1 + p.decay_time;
    let decay_c2 = -p.b * p.decay_amplitude() * (-p.b * p.decay_time).exp();
    phases.push(tagged(-p.b, decay_c2, t1, extinction, PhaseRole::Decay));
    phases.push(tagged(0.0, 0.0, extinction, f64::INFINITY, PhaseRole::Extinct));
    PiecewiseAffineSde::new(phases, 0.0)
}

/// `(e^x - 1) / x`, continuous through `x = 0`.
fn exprel(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + 0.5 * x + x * x / 6.0
    } else {
        x.exp_m1() / x
    }
}

/// Closed-form mean rate of a [`PiecewiseAffineSde`], chained across phases
/// by continuity.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanRate {
    phases: Vec<AffinePhase>,
    start_means: Vec<f64>,
}

impl MeanRate {
    fn phase_mean(ph: &AffinePhase, mu0: f64, dt: f64) -> f64 {
        // (mu0 + c2/c1) e^{c1 dt} - c2/c1, with the c1 -> 0 limit built in
        let x = ph.c1 * dt;
        mu0 * x.exp() + ph.c2 * dt * exprel(x)
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        let i = self
            .phases
            .partition_point(|ph| ph.start <= t)
            .saturating_sub(1);
        let ph = &self.phases[i];
        Self::phase_mean(ph, self.start_means[i], (t - ph.start).max(0.0))
    }
}

pub fn analytic_mean(sde: &PiecewiseAffineSde) -> MeanRate {
    let mut start_means = Vec::with_capacity(sde.phases.len());
    let mut mu = sde.initial_value;
    for ph in &sde.phases {
        start_means.push(mu);
        if ph.end.is_finite() {
            mu = MeanRate::phase_mean(ph, mu, ph.end - ph.start);
        }
    }
    MeanRate {
        phases: sde.phases.clone(),
        start_means,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(dt: f64, n_paths: usize, seed: u64) -> Result<Self> {
        let c = SimConfig { dt, n_paths, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParams(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidParams("n_paths must be at least 1".into()));
        }
        Ok(())
    }
}

/// A simulated path sampled on its time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    pub fn final_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Linear interpolation; clamps outside the simulated range.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Trapezoidal integral of the path over its whole grid (the signed
    /// delivered energy).
    pub fn integral(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
            .sum()
    }
}

/// Uniform steps no longer than `dt` covering `[start, end]`.
fn segment_steps(start: f64, end: f64, dt: f64) -> (usize, f64) {
    let len = end - start;
    let n = ((len / dt) - 1e-9).ceil().max(1.0) as usize;
    (n, len / n as f64)
}

fn check_horizon(t_end: f64) -> Result<()> {
    if t_end > 0.0 && t_end.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("t_end must be positive and finite, got {t_end}")))
    }
}

/// One Euler–Maruyama path of `sde` on `[0, t_end]`, driven by normal stream
/// `path_id` of `config.seed`.
pub fn simulate_path(sde: &PiecewiseAffineSde, config: &SimConfig, path_id: u64, t_end: f64) -> Result<Trajectory> {
    config.validate()?;
    check_horizon(t_end)?;
    if t_end > sde.horizon() {
        return Err(Error::InvalidParams(format!(
            "t_end={t_end} lies beyond the last phase end {}",
            sde.horizon()
        )));
    }
    for ph in sde.phases.iter().filter(|ph| ph.start < t_end) {
        let length = ph.end - ph.start;
        if config.dt > length {
            return Err(Error::StepTooLarge {
                dt: config.dt,
                phase_length: length,
            });
        }
    }

    let mut normals = NormalStream::new(config.seed, path_id);
    let capacity = (t_end / config.dt).ceil() as usize + sde.phases.len() + 1;
    let mut times = Vec::with_capacity(capacity);
    let mut values = Vec::with_capacity(capacity);
    let mut phi = sde.initial_value;
    times.push(0.0);
    values.push(phi);

    for ph in sde.phases.iter().filter(|ph| ph.start < t_end) {
        let seg_end = ph.end.min(t_end);
        let (n, h) = segment_steps(ph.start, seg_end, config.dt);
        let sqrt_h = h.sqrt();
        for k in 1..=n {
            let z = normals.next_deviate();
            phi += ph.drift(phi) * h + ph.diffusion(phi) * sqrt_h * z;
            let t = if k == n { seg_end } else { ph.start + k as f64 * h };
            if !phi.is_finite() {
                return Err(Error::NonFinite { at: t, value: phi });
            }
            times.push(t);
            values.push(phi);
        }
    }
    Ok(Trajectory { times, values })
}

/// Euler–Maruyama for `dφ = drift(t, φ) dt + diffusion(t, φ) dB` on a uniform
/// grid over `[0, t_end]`.
pub fn simulate_general_sde<D, G>(
    drift: D,
    diffusion: G,
    initial_value: f64,
    config: &SimConfig,
    path_id: u64,
    t_end: f64,
) -> Result<Trajectory>
where
    D: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> f64,
{
    config.validate()?;
    check_horizon(t_end)?;
    let (n, h) = segment_steps(0.0, t_end, config.dt);
    let sqrt_h = h.sqrt();
    let mut normals = NormalStream::new(config.seed, path_id);
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let mut phi = initial_value;
    let mut t = 0.0;
    times.push(t);
    values.push(phi);
    for k in 1..=n {
        let z = normals.next_deviate();
        phi += drift(t, phi) * h + diffusion(t, phi) * sqrt_h * z;
        t = if k == n { t_end } else { k as f64 * h };
        if !phi.is_finite() {
            return Err(Error::NonFinite { at: t, value: phi });
        }
        times.push(t);
        values.push(phi);
    }
    Ok(Trajectory { times, values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Running mean and variance, accumulated in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2.max(0.0) / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

/// Simulates `config.n_paths` paths in parallel; returns the per-path results
/// ordered by path id.
fn par_paths<T, F>(n_paths: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n_paths as u64).into_par_iter().map(f).collect()
}

/// Monte-Carlo mean and standard error of the rate at each grid time, using
/// paths `0..n_paths`.
pub fn estimate_mean(sde: &PiecewiseAffineSde, config: &SimConfig, grid: &[f64]) -> Result<MeanEstimate> {
    config.validate()?;
    if config.n_paths < 2 {
        return Err(Error::InvalidParams("estimate_mean needs at least two paths".into()));
    }
    if grid.is_empty() {
        return Err(Error::EmptySamples("grid"));
    }
    if grid.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidParams("grid times must be finite and non-negative".into()));
    }
    let t_end = grid.iter().copied().fold(0.0, f64::max);
    if t_end == 0.0 {
        let v = sde.initial_value;
        return Ok(MeanEstimate {
            grid: grid.to_vec(),
            mean: vec![v; grid.len()],
            stderr: vec![0.0; grid.len()],
        });
    }

    let samples = par_paths(config.n_paths, |id| {
        let path = simulate_path(sde, config, id, t_end)?;
        Ok(grid.iter().map(|&t| path.value_at(t)).collect::<Vec<_>>())
    })?;

    let mut acc = vec![Welford::default(); grid.len()];
    for path in &samples {
        for (w, &x) in acc.iter_mut().zip(path) {
            w.push(x);
        }
    }
    Ok(MeanEstimate {
        grid: grid.to_vec(),
        mean: acc.iter().map(|w| w.mean).collect(),
        stderr: acc.iter().map(Welford::stderr).collect(),
    })
}

/// Monte-Carlo check that the noisy line delivers `Q` on average.
///
/// The reference is the delivered energy of the noise-free Euler path on the
/// same grid, which is exactly the expectation of the discretized scheme for
/// affine drift; its gap to `Q` is the time-discretization bias and is
/// reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryCheck {
    pub delivered_mean: f64,
    pub delivered_stderr: f64,
    pub euler_reference: f64,
    pub discretization_bias: f64,
    pub band: f64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisySolution {
    #[serde(flatten)]
    pub solution: SwitchOffSolution,
    pub check: DeliveryCheck,
}

/// Deterministic profile traced by the analytic mean of the drift for the
/// exponential model.
pub fn mean_profile(p: ExponentialParams) -> Result<SupplyProfile> {
    let mean = Arc::new(analytic_mean(&phases_from_profile(p, p.t0)?));
    let ramp_mean = Arc::clone(&mean);
    let t0 = p.t0;
    SupplyProfile::new(
        Arc::new(move |t: f64| ramp_mean.evaluate(t.min(t0))),
        p.t0,
        Arc::new(move |u: f64| mean.evaluate(t0 + u)),
        p.decay_time,
    )
}

/// Optimal switch-off time for the noisy exponential supply line: solve the
/// deterministic problem for the mean rate, then verify the delivered energy
/// by Monte Carlo.
pub fn solve_noisy(
    p: ExponentialParams,
    noise: PhaseNoise,
    q: EnergyDemand,
    config: &SimConfig,
) -> Result<NoisySolution> {
    config.validate()?;
    let solution = solve_general(&mean_profile(p)?, q, Tolerance::default())?;
    let sde = phases_from_profile(p, solution.t1_hat)?.with_noise(noise);
    let t2 = solution.t2;

    let reference = simulate_path(&sde.clone().without_noise(), config, 0, t2)?.integral();
    let energies = par_paths(config.n_paths, |id| Ok(simulate_path(&sde, config, id, t2)?.integral()))?;
    let mut acc = Welford::default();
    for &e in &energies {
        acc.push(e);
    }
    let stderr = acc.stderr();
    let band = 4.0 * stderr + 1e-12 * q.value().max(1.0);
    let check = DeliveryCheck {
        delivered_mean: acc.mean,
        delivered_stderr: stderr,
        euler_reference: reference,
        discretization_bias: reference - q.value(),
        band,
        n_paths: config.n_paths,
    };
    if (acc.mean - reference).abs() > band {
        return Err(Error::MeanVerificationFailed {
            sample_mean: acc.mean,
            demand: q.value(),
            band,
        });
    }
    Ok(NoisySolution { solution, check })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::exponential_profile;
    use std::f64::consts::{E, LN_2};

    fn canonical() -> ExponentialParams {
        ExponentialParams::new(1.0, 1.0, LN_2, LN_2).unwrap()
    }

    fn single(c1: f64, c2: f64, c3: f64, c4: f64) -> PiecewiseAffineSde {
        PiecewiseAffineSde::new(vec![AffinePhase::new(c1, c2, c3, c4, 0.0, f64::INFINITY)], 0.0).unwrap()
    }

    #[test]
    fn drift_coefficients_of_the_exponential_model() {
        let sde = phases_from_profile(canonical(), 3.0 * LN_2).unwrap();
        let ph = sde.phases();
        assert_eq!(ph.len(), 4);
        assert_eq!((ph[0].c1, ph[0].c2, ph[0].role), (1.0, 1.0, PhaseRole::Ramp));
        assert_eq!((ph[1].c1, ph[1].c2, ph[1].role), (0.0, 0.0, PhaseRole::Plateau));
        assert_eq!(ph[2].c1, -1.0);
        assert!((ph[2].c2 + 1.0).abs() < 1e-15);
        assert_eq!(ph[3].role, PhaseRole::Extinct);
        assert!(ph.iter().all(|p| p.c3 == 0.0 && p.c4 == 0.0));
        assert!(matches!(phases_from_profile(canonical(), 0.1), Err(Error::SwitchOffBeforePeak { .. })));
        // no plateau when switching off at the peak
        assert_eq!(phases_from_profile(canonical(), LN_2).unwrap().phases().len(), 3);
    }

    #[test]
    fn sde_validation() {
        let gap = vec![
            AffinePhase::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0),
            AffinePhase::new(0.0, 0.0, 0.0, 0.0, 1.5, 2.0),
        ];
        assert!(PiecewiseAffineSde::new(gap, 0.0).is_err());
        assert!(PiecewiseAffineSde::new(vec![], 0.0).is_err());
        assert!(PiecewiseAffineSde::new(vec![AffinePhase::new(0.0, 0.0, 0.0, 0.0, 1.0, 2.0)], 0.0).is_err());
        assert!(PiecewiseAffineSde::new(vec![AffinePhase::new(f64::NAN, 0.0, 0.0, 0.0, 0.0, 2.0)], 0.0).is_err());
        let open_middle = vec![
            AffinePhase::new(0.0, 0.0, 0.0, 0.0, 0.0, f64::INFINITY),
            AffinePhase::new(0.0, 0.0, 0.0, 0.0, f64::INFINITY, f64::INFINITY),
        ];
        assert!(PiecewiseAffineSde::new(open_middle, 0.0).is_err());
    }

    #[test]
    fn mean_formula_single_phase() {
        let m = analytic_mean(&single(1.0, 1.0, 0.0, 0.0));
        assert!((m.evaluate(1.0) - (E - 1.0)).abs() < 1e-15);
        let m = analytic_mean(&single(0.0, 3.0, 0.0, 0.0));
        assert_eq!(m.evaluate(2.0), 6.0);
        // tiny c1 takes the series branch and stays continuous
        let m = analytic_mean(&single(1e-12, 3.0, 0.0, 0.0));
        assert!((m.evaluate(2.0) - 6.0).abs() < 1e-10);
    }

    #[test]
    fn mean_reproduces_deterministic_rate() {
        let t1 = 3.0 * LN_2;
        let m = analytic_mean(&phases_from_profile(canonical(), t1).unwrap());
        let prof = exponential_profile(canonical()).unwrap();
        for t in [0.3, 1.0, 2.4] {
            assert!((m.evaluate(t) - prof.rate_at(t1, t).unwrap()).abs() < 1e-9, "t={t}");
        }
        assert!(m.evaluate(10.0).abs() < 1e-9);
    }

    #[test]
    fn noise_free_euler_tracks_exponential() {
        let cfg = SimConfig::new(1e-4, 1, 7).unwrap();
        let path = simulate_path(&single(1.0, 1.0, 0.0, 0.0), &cfg, 0, 1.0).unwrap();
        assert_eq!(*path.times.last().unwrap(), 1.0);
        assert!((path.final_value() - (E - 1.0)).abs() < 5e-4);
    }

    #[test]
    fn brownian_path_starts_at_zero_and_is_reproducible() {
        let cfg = SimConfig::new(1e-2, 1, 42).unwrap();
        let sde = single(0.0, 0.0, 0.0, 1.0);
        let a = simulate_path(&sde, &cfg, 3, 1.0).unwrap();
        let b = simulate_path(&sde, &cfg, 3, 1.0).unwrap();
        assert_eq!(a.values[0], 0.0);
        assert_eq!(a, b);
        assert_ne!(a, simulate_path(&sde, &cfg, 4, 1.0).unwrap());
    }

    #[test]
    fn grid_snaps_to_phase_boundaries() {
        let sde = phases_from_profile(canonical(), 3.0 * LN_2).unwrap();
        let cfg = SimConfig::new(0.1, 1, 0).unwrap();
        let path = simulate_path(&sde, &cfg, 0, 4.0 * LN_2).unwrap();
        for b in [LN_2, 3.0 * LN_2, 4.0 * LN_2] {
            assert!(path.times.contains(&b), "missing boundary {b}");
        }
        assert!(path.times.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.1 + 1e-15));
    }

    #[test]
    fn step_larger_than_a_phase() {
        let sde = phases_from_profile(canonical(), 3.0 * LN_2).unwrap();
        let cfg = SimConfig::new(1.0, 1, 0).unwrap();
        assert!(matches!(simulate_path(&sde, &cfg, 0, 2.0), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn blow_up_is_reported() {
        let cfg = SimConfig::new(0.1, 1, 0).unwrap();
        let err = simulate_path(&single(1e300, 1e300, 0.0, 0.0), &cfg, 0, 10.0).unwrap_err();
        assert_eq!(err.kind(), "NonFinite");
    }

    #[test]
    fn general_sde_matches_affine_path() {
        let cfg = SimConfig::new(1e-3, 1, 11).unwrap();
        let affine = simulate_path(&single(1.0, 1.0, 0.0, 0.0), &cfg, 5, 1.0).unwrap();
        let general = simulate_general_sde(|_, x| x + 1.0, |_, _| 0.0, 0.0, &cfg, 5, 1.0).unwrap();
        assert_eq!(affine, general);

        let noisy_affine = simulate_path(&single(0.5, 0.2, 0.3, 0.1), &cfg, 2, 1.0).unwrap();
        let noisy_general =
            simulate_general_sde(|_, x| 0.5 * x + 0.2, |_, x| 0.3 * x + 0.1, 0.0, &cfg, 2, 1.0).unwrap();
        assert_eq!(noisy_affine, noisy_general);
    }

    #[test]
    fn general_sde_constant_and_brownian() {
        let cfg = SimConfig::new(1e-2, 1, 1).unwrap();
        let flat = simulate_general_sde(|_, _| 0.0, |_, _| 0.0, 2.5, &cfg, 0, 1.0).unwrap();
        assert!(flat.values.iter().all(|&v| v == 2.5));

        let dt = 1e-3;
        let cfg = SimConfig::new(dt, 1, 9).unwrap();
        let bm = simulate_general_sde(|_, _| 0.0, |_, _| 1.0, 0.0, &cfg, 0, 100.0).unwrap();
        let inc: Vec<f64> = bm.values.windows(2).map(|w| w[1] - w[0]).collect();
        let n = inc.len() as f64;
        assert_eq!(inc.len(), 100_000);
        let mean = inc.iter().sum::<f64>() / n;
        let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 * (dt / n).sqrt(), "mean {mean}");
        // var of the sample variance is 2 dt^2 / n
        assert!((var - dt).abs() < 4.0 * dt * (2.0 / n).sqrt(), "var {var}");
    }

    #[test]
    fn brownian_mean_estimate() {
        let cfg = SimConfig::new(1e-2, 10_000, 42).unwrap();
        let est = estimate_mean(&single(0.0, 0.0, 0.0, 1.0), &cfg, &[0.5, 1.0]).unwrap();
        let (m, s) = (est.mean[1], est.stderr[1]);
        assert!((s - 0.01).abs() < 0.001, "stderr {s}");
        assert!(m.abs() <= 4.0 * s, "mean {m} stderr {s}");
    }

    #[test]
    fn noise_free_estimate_has_zero_stderr() {
        let cfg = SimConfig::new(1e-2, 50, 42).unwrap();
        let est = estimate_mean(&single(1.0, 1.0, 0.0, 0.0), &cfg, &[0.25, 0.5, 1.0]).unwrap();
        assert!(est.stderr.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn drift_mean_under_additive_noise() {
        let cfg = SimConfig::new(1e-3, 10_000, 42).unwrap();
        let est = estimate_mean(&single(1.0, 1.0, 0.0, 0.5), &cfg, &[1.0]).unwrap();
        assert!((est.mean[0] - (E - 1.0)).abs() <= 4.0 * est.stderr[0], "{est:?}");
    }

    #[test]
    fn estimate_mean_preconditions() {
        let sde = single(0.0, 0.0, 0.0, 1.0);
        let one = SimConfig::new(1e-2, 1, 0).unwrap();
        assert!(estimate_mean(&sde, &one, &[1.0]).is_err());
        let cfg = SimConfig::new(1e-2, 4, 0).unwrap();
        assert!(estimate_mean(&sde, &cfg, &[]).is_err());
        assert!(estimate_mean(&sde, &cfg, &[-1.0]).is_err());
        assert!(SimConfig::new(0.0, 1, 0).is_err());
        assert!(SimConfig::new(0.1, 0, 0).is_err());
    }

    #[test]
    fn mean_profile_is_the_deterministic_profile() {
        let mp = mean_profile(canonical()).unwrap();
        let prof = exponential_profile(canonical()).unwrap();
        for i in 0..=50 {
            let t = i as f64 * 0.06;
            let (a, b) = (mp.rate_at(2.0, t).unwrap(), prof.rate_at(2.0, t).unwrap());
            assert!((a - b).abs() < 1e-12, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn noisy_solution_reduces_to_deterministic() {
        let q = EnergyDemand::new(2.0).unwrap();
        let cfg = SimConfig::new(1e-2, 2_000, 42).unwrap();
        let s = solve_noisy(canonical(), PhaseNoise::uniform(0.1, 0.3), q, &cfg).unwrap();
        assert!((s.solution.t1_hat - 3.0 * LN_2).abs() < 1e-9);
        assert!(s.check.delivered_stderr > 0.0);

        let quiet = solve_noisy(canonical(), PhaseNoise::default(), q, &cfg).unwrap();
        assert_eq!(quiet.check.delivered_stderr, 0.0);
        assert_eq!(quiet.check.delivered_mean, quiet.check.euler_reference);
        assert!(quiet.check.discretization_bias.abs() < 0.05);

        let coarse = SimConfig::new(1.5, 10, 42).unwrap();
        assert!(matches!(
            solve_noisy(canonical(), PhaseNoise::default(), q, &coarse),
            Err(Error::StepTooLarge { .. })
        ));
    }
}
