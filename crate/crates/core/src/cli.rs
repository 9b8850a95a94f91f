//! Command-line front end.
//!
//! Every subcommand takes the same flat set of numeric flags; a JSON config
//! file with the same keys can supply any of them and flags win over the
//! file. Exit codes: 0 success, 1 numeric or I/O failure, 2 usage error,
//! 3 infeasible problem.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::Error;
use crate::numerics::{integrate_with_breakpoints, Interval, Tolerance};
use crate::profiles::{exponential_profile, linear_profile, tabulated_profile, ExponentialParams, LinearParams, SupplyProfile};
use crate::solver::{
    no_switchoff_time, solve_exponential, solve_family, solve_general, solve_linear, EnergyDemand, EnergyFamily,
    SwitchOffSolution,
};
use crate::stochastic::{
    analytic_mean, estimate_mean, phases_from_profile, solve_noisy, NoisySolution, PhaseNoise, SimConfig,
};

pub const SEED_ENV: &str = "SWITCHOFF_SEED";
const DEFAULT_SEED: u64 = 42;
const DEFAULT_DT: f64 = 1e-3;
const DEFAULT_PATHS: usize = 1000;
const DEFAULT_POINTS: usize = 201;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Solver(Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Solver(e) if e.is_infeasible() => 3,
            CliError::Solver(_) | CliError::Io(_) => 1,
        }
    }

    pub fn reason(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Solver(e) => e.kind(),
            CliError::Io(_) => "IoError",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Solver(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Solver(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Exp,
    Linear,
    Tabulated,
}

#[derive(Parser, Debug)]
#[command(name = "switchoff", version, about = "Minimal switch-off time of an energy device")]
struct Cli {
    #[command(subcommand)]
    command: CommandArgs,
}

#[derive(Subcommand, Debug)]
enum CommandArgs {
    /// Closed form for the exponential model
    SolveExp(Flags),
    /// Closed form for the linear model
    SolveLinear(Flags),
    /// Energy-balance solver for any profile (--model)
    SolveGeneral(Flags),
    /// Nested root-finding solver over the switch-off family (--model)
    SolveFamily(Flags),
    /// Completion time if the device is never switched off
    NoSwitchoff(Flags),
    /// Monte-Carlo mean of the noisy exponential supply line
    Simulate(Flags),
    /// Optimal switch-off time of the noisy exponential supply line
    SolveNoisy(Flags),
    /// Rate and cumulative energy on a uniform grid, as CSV
    Curve(Flags),
}

/// Flat parameter set shared by the flags and the JSON config file.
#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Flags {
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[arg(long = "T", allow_negative_numbers = true)]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub decay_time: Option<f64>,
    #[arg(long = "Q", allow_negative_numbers = true)]
    #[serde(rename = "Q", skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Multiplicative noise coefficient, applied to every active phase
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c3: Option<f64>,
    /// Additive noise coefficient, applied to every active phase
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c4: Option<f64>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,
    /// CSV with columns t,rate for the ramp of a tabulated profile
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ramp: Option<PathBuf>,
    /// CSV with columns t,rate for the decay of a tabulated profile
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip)]
    pub format: Option<Format>,
}

impl Flags {
    /// Fills every unset field from `file`.
    fn or(self, file: Flags) -> Flags {
        Flags {
            a: self.a.or(file.a),
            b: self.b.or(file.b),
            t0: self.t0.or(file.t0),
            decay_time: self.decay_time.or(file.decay_time),
            q: self.q.or(file.q),
            t1: self.t1.or(file.t1),
            dt: self.dt.or(file.dt),
            paths: self.paths.or(file.paths),
            seed: self.seed.or(file.seed),
            points: self.points.or(file.points),
            c3: self.c3.or(file.c3),
            c4: self.c4.or(file.c4),
            model: self.model.or(file.model),
            ramp: self.ramp.or(file.ramp),
            decay: self.decay.or(file.decay),
            config: self.config,
            out: self.out,
            format: self.format,
        }
    }

    fn required(&self, value: Option<f64>, flag: &str) -> Result<f64, CliError> {
        let v = value.ok_or_else(|| CliError::Usage(format!("missing required parameter --{flag}")))?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(CliError::Usage(format!("--{flag} must be positive and finite, got {v}")))
        }
    }

    fn exponential(&self) -> Result<ExponentialParams, CliError> {
        Ok(ExponentialParams::new(
            self.required(self.a, "a")?,
            self.required(self.b, "b")?,
            self.required(self.t0, "t0")?,
            self.required(self.decay_time, "T")?,
        )?)
    }

    fn linear(&self) -> Result<LinearParams, CliError> {
        Ok(LinearParams::new(
            self.required(self.a, "a")?,
            self.required(self.t0, "t0")?,
            self.required(self.decay_time, "T")?,
        )?)
    }

    fn demand(&self) -> Result<EnergyDemand, CliError> {
        Ok(EnergyDemand::new(self.required(self.q, "Q")?)?)
    }

    fn model(&self) -> Result<ModelSpec, CliError> {
        match self.model.unwrap_or_default() {
            ModelKind::Exp => Ok(ModelSpec::Exponential(self.exponential()?)),
            ModelKind::Linear => Ok(ModelSpec::Linear(self.linear()?)),
            ModelKind::Tabulated => {
                let ramp = self
                    .ramp
                    .clone()
                    .ok_or_else(|| CliError::Usage("--model tabulated requires --ramp".into()))?;
                let decay = self
                    .decay
                    .clone()
                    .ok_or_else(|| CliError::Usage("--model tabulated requires --decay".into()))?;
                Ok(ModelSpec::Tabulated { ramp, decay })
            }
        }
    }

    fn noise(&self) -> Result<PhaseNoise, CliError> {
        let c3 = self.c3.unwrap_or(0.0);
        let c4 = self.c4.unwrap_or(0.0);
        if !c3.is_finite() || !c4.is_finite() {
            return Err(CliError::Usage("--c3 and --c4 must be finite".into()));
        }
        Ok(PhaseNoise::uniform(c3, c4))
    }

    fn sim(&self, env_seed: Option<u64>) -> Result<SimConfig, CliError> {
        let dt = self.dt.unwrap_or(DEFAULT_DT);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CliError::Usage(format!("--dt must be positive and finite, got {dt}")));
        }
        let paths = self.paths.unwrap_or(DEFAULT_PATHS);
        if paths == 0 {
            return Err(CliError::Usage("--paths must be at least 1".into()));
        }
        Ok(SimConfig::new(dt, paths, self.seed.or(env_seed).unwrap_or(DEFAULT_SEED))?)
    }

    fn points(&self) -> Result<usize, CliError> {
        let n = self.points.unwrap_or(DEFAULT_POINTS);
        if n < 2 {
            return Err(CliError::Usage(format!("--points must be at least 2, got {n}")));
        }
        Ok(n)
    }

    fn switch_off(&self) -> Result<SwitchOff, CliError> {
        match (self.t1, self.q) {
            (Some(t1), _) if t1.is_finite() => Ok(SwitchOff::At(t1)),
            (Some(t1), _) => Err(CliError::Usage(format!("--t1 must be finite, got {t1}"))),
            (None, Some(_)) => Ok(SwitchOff::Optimal(self.demand()?)),
            (None, None) => Err(CliError::Usage("one of --t1 or --Q is required".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Exponential(ExponentialParams),
    Linear(LinearParams),
    Tabulated { ramp: PathBuf, decay: PathBuf },
}

impl ModelSpec {
    pub fn profile(&self) -> Result<SupplyProfile, CliError> {
        match self {
            ModelSpec::Exponential(p) => Ok(exponential_profile(*p)?),
            ModelSpec::Linear(p) => Ok(linear_profile(*p)?),
            ModelSpec::Tabulated { ramp, decay } => {
                Ok(tabulated_profile(&read_samples(ramp)?, &read_samples(decay)?)?)
            }
        }
    }
}

/// Switch-off time for curves: given directly or solved from a demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SwitchOff {
    At(f64),
    Optimal(EnergyDemand),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    SolveExp { params: ExponentialParams, demand: EnergyDemand },
    SolveLinear { params: LinearParams, demand: EnergyDemand },
    SolveGeneral { model: ModelSpec, demand: EnergyDemand },
    SolveFamily { model: ModelSpec, demand: EnergyDemand },
    NoSwitchoff { model: ModelSpec, demand: EnergyDemand },
    Simulate { params: ExponentialParams, switch_off: SwitchOff, noise: PhaseNoise, sim: SimConfig, points: usize },
    SolveNoisy { params: ExponentialParams, demand: EnergyDemand, noise: PhaseNoise, sim: SimConfig },
    Curve {
        model: ModelSpec,
        switch_off: SwitchOff,
        points: usize,
        stochastic: Option<(PhaseNoise, SimConfig)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    /// Effective parameters after merging the config file, echoed in JSON
    /// output so it can be fed back as a config.
    pub params: Flags,
    pub output_path: Option<PathBuf>,
    pub format: Format,
}

fn load_config(path: &Path) -> Result<Flags, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read --config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid --config {}: {e}", path.display())))
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got {s:?}"))),
        Err(_) => Ok(None),
    }
}

/// Parses `argv` (including the program name) into a validated run.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    let (name, flags) = match cli.command {
        CommandArgs::SolveExp(f) => ("solve-exp", f),
        CommandArgs::SolveLinear(f) => ("solve-linear", f),
        CommandArgs::SolveGeneral(f) => ("solve-general", f),
        CommandArgs::SolveFamily(f) => ("solve-family", f),
        CommandArgs::NoSwitchoff(f) => ("no-switchoff", f),
        CommandArgs::Simulate(f) => ("simulate", f),
        CommandArgs::SolveNoisy(f) => ("solve-noisy", f),
        CommandArgs::Curve(f) => ("curve", f),
    };
    let flags = match &flags.config {
        Some(path) => {
            let file = load_config(path)?;
            flags.or(file)
        }
        None => flags,
    };
    let env_seed = env_seed()?;

    let command = match name {
        "solve-exp" => Command::SolveExp {
            params: flags.exponential()?,
            demand: flags.demand()?,
        },
        "solve-linear" => Command::SolveLinear {
            params: flags.linear()?,
            demand: flags.demand()?,
        },
        "solve-general" => Command::SolveGeneral {
            model: flags.model()?,
            demand: flags.demand()?,
        },
        "solve-family" => Command::SolveFamily {
            model: flags.model()?,
            demand: flags.demand()?,
        },
        "no-switchoff" => Command::NoSwitchoff {
            model: flags.model()?,
            demand: flags.demand()?,
        },
        "simulate" => Command::Simulate {
            params: flags.exponential()?,
            switch_off: flags.switch_off()?,
            noise: flags.noise()?,
            sim: flags.sim(env_seed)?,
            points: flags.points()?,
        },
        "solve-noisy" => Command::SolveNoisy {
            params: flags.exponential()?,
            demand: flags.demand()?,
            noise: flags.noise()?,
            sim: flags.sim(env_seed)?,
        },
        _ => {
            let model = flags.model()?;
            let stochastic = if flags.paths.is_some() {
                if !matches!(model, ModelSpec::Exponential(_)) {
                    return Err(CliError::Usage("stochastic curves (--paths) need --model exp".into()));
                }
                Some((flags.noise()?, flags.sim(env_seed)?))
            } else {
                None
            };
            Command::Curve {
                model,
                switch_off: flags.switch_off()?,
                points: flags.points()?,
                stochastic,
            }
        }
    };

    let mut params = flags.clone();
    params.seed = params.seed.or(env_seed);
    Ok(RunConfig {
        command,
        output_path: flags.out.clone(),
        format: flags.format.unwrap_or_default(),
        params,
    })
}

/// One row of a curve file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub t: f64,
    pub rate: f64,
    pub cumulative_energy: f64,
    /// Monte-Carlo mean and standard error, for stochastic curves.
    pub mean: Option<(f64, f64)>,
}

fn uniform_grid(end: f64, n_points: usize) -> Vec<f64> {
    let last = n_points - 1;
    (0..n_points)
        .map(|i| if i == last { end } else { end * i as f64 / last as f64 })
        .collect()
}

/// Rate and cumulative energy of `profile` on a uniform grid over
/// `[0, t1 + T]`; the cumulative column is accumulated panel by panel.
pub fn profile_curve(profile: &SupplyProfile, t1: f64, n_points: usize) -> Result<Vec<CurveRow>, Error> {
    if n_points < 2 {
        return Err(Error::InvalidParams("a curve needs at least two points".into()));
    }
    let end = profile.extinction_time(t1)?;
    let tol = Tolerance::default();
    let breaks = profile.breakpoints(t1);
    let grid = uniform_grid(end, n_points);
    let mut rows = Vec::with_capacity(n_points);
    let mut cumulative = 0.0;
    let mut prev = 0.0;
    for &t in &grid {
        if t > prev {
            cumulative += integrate_with_breakpoints(
                |s| profile.rate_at(t1, s).unwrap_or(0.0),
                Interval::new(prev, t)?,
                &breaks,
                tol,
            )?
            .value;
        }
        rows.push(CurveRow {
            t,
            rate: profile.rate_at(t1, t)?,
            cumulative_energy: cumulative,
            mean: None,
        });
        prev = t;
    }
    Ok(rows)
}

/// Deterministic curve of the exponential model with the Monte-Carlo mean and
/// standard error of the noisy line attached to every row.
pub fn stochastic_curve(
    p: ExponentialParams,
    t1: f64,
    noise: PhaseNoise,
    sim: &SimConfig,
    n_points: usize,
) -> Result<Vec<CurveRow>, Error> {
    let profile = exponential_profile(p)?;
    let mut rows = profile_curve(&profile, t1, n_points)?;
    let sde = phases_from_profile(p, t1)?.with_noise(noise);
    let mean = analytic_mean(&sde);
    let grid: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let est = estimate_mean(&sde, sim, &grid)?;
    for (i, row) in rows.iter_mut().enumerate() {
        row.rate = mean.evaluate(row.t);
        row.mean = Some((est.mean[i], est.stderr[i]));
    }
    Ok(rows)
}

fn csv_number(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `t,rate,cumulative_energy` (plus `mean,stderr` when present) with
/// 17 significant digits.
pub fn write_curve<W: Write>(rows: &[CurveRow], mut out: W) -> io::Result<()> {
    let stochastic = rows.iter().any(|r| r.mean.is_some());
    if stochastic {
        writeln!(out, "t,rate,cumulative_energy,mean,stderr")?;
    } else {
        writeln!(out, "t,rate,cumulative_energy")?;
    }
    for r in rows {
        write!(out, "{},{},{}", csv_number(r.t), csv_number(r.rate), csv_number(r.cumulative_energy))?;
        if stochastic {
            let (m, s) = r.mean.unwrap_or((f64::NAN, f64::NAN));
            write!(out, ",{},{}", csv_number(m), csv_number(s))?;
        }
        writeln!(out)?;
    }
    out.flush()
}

/// Writes a curve to `path`.
pub fn emit_curve(rows: &[CurveRow], path: &Path) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_curve(rows, io::BufWriter::new(file)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Deserialize)]
struct Sample {
    t: f64,
    rate: f64,
}

/// Reads a `t,rate` CSV.
pub fn read_samples(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    reader
        .deserialize::<Sample>()
        .map(|r| {
            r.map(|s| (s.t, s.rate))
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
        })
        .collect()
}

fn solution_fields(sol: &SwitchOffSolution) -> Map<String, Value> {
    match serde_json::to_value(sol) {
        Ok(Value::Object(m)) => m,
        _ => Map::new(),
    }
}

fn solution_text(sol: &SwitchOffSolution) -> String {
    format!(
        "t1_hat={} t2={} y={} residual={} method={} feasible={}",
        sol.t1_hat,
        sol.t2,
        sol.y,
        sol.delivered_residual,
        sol.method.as_str(),
        sol.feasible
    )
}

fn solution_csv(sol: &SwitchOffSolution) -> String {
    format!(
        "t1_hat,t2,y,residual,method,feasible\n{},{},{},{},{},{}\n",
        csv_number(sol.t1_hat),
        csv_number(sol.t2),
        csv_number(sol.y),
        csv_number(sol.delivered_residual),
        sol.method.as_str(),
        sol.feasible
    )
}

fn with_params(config: &RunConfig, name: &str, fields: Map<String, Value>) -> Value {
    let mut obj = match serde_json::to_value(&config.params) {
        Ok(Value::Object(m)) => m,
        _ => Map::new(),
    };
    obj.insert("command".into(), Value::from(name));
    obj.extend(fields);
    Value::Object(obj)
}

fn render_solution(config: &RunConfig, name: &str, sol: &SwitchOffSolution) -> String {
    match config.format {
        Format::Text => solution_text(sol) + "\n",
        Format::Json => with_params(config, name, solution_fields(sol)).to_string() + "\n",
        Format::Csv => solution_csv(sol),
    }
}

fn render_noisy(config: &RunConfig, sol: &NoisySolution) -> String {
    let c = &sol.check;
    match config.format {
        Format::Text => format!(
            "{} mc_mean={} mc_stderr={} euler_reference={} discretization_bias={} paths={}\n",
            solution_text(&sol.solution),
            c.delivered_mean,
            c.delivered_stderr,
            c.euler_reference,
            c.discretization_bias,
            c.n_paths
        ),
        Format::Json => {
            let mut fields = solution_fields(&sol.solution);
            if let Ok(v) = serde_json::to_value(c) {
                fields.insert("check".into(), v);
            }
            with_params(config, "solve-noisy", fields).to_string() + "\n"
        }
        Format::Csv => solution_csv(&sol.solution),
    }
}

fn resolve_t1(profile: &SupplyProfile, switch_off: SwitchOff) -> Result<f64, CliError> {
    match switch_off {
        SwitchOff::At(t1) => Ok(t1),
        SwitchOff::Optimal(q) => Ok(solve_general(profile, q, Tolerance::default())?.t1_hat),
    }
}

fn command_output(config: &RunConfig) -> Result<String, CliError> {
    let out = match &config.command {
        Command::SolveExp { params, demand } => {
            render_solution(config, "solve-exp", &solve_exponential(*params, *demand)?)
        }
        Command::SolveLinear { params, demand } => {
            render_solution(config, "solve-linear", &solve_linear(*params, *demand)?)
        }
        Command::SolveGeneral { model, demand } => {
            let sol = solve_general(&model.profile()?, *demand, Tolerance::default())?;
            render_solution(config, "solve-general", &sol)
        }
        Command::SolveFamily { model, demand } => {
            let family = EnergyFamily::from_profile(&model.profile()?);
            let sol = solve_family(&family, *demand, Tolerance::default())?;
            render_solution(config, "solve-family", &sol)
        }
        Command::NoSwitchoff { model, demand } => {
            let t = no_switchoff_time(&model.profile()?, *demand)?;
            match config.format {
                Format::Text => format!("t_no_switchoff={t}\n"),
                Format::Json => {
                    let mut m = Map::new();
                    m.insert("t_no_switchoff".into(), Value::from(t));
                    with_params(config, "no-switchoff", m).to_string() + "\n"
                }
                Format::Csv => format!("t_no_switchoff\n{}\n", csv_number(t)),
            }
        }
        Command::SolveNoisy { params, demand, noise, sim } => {
            render_noisy(config, &solve_noisy(*params, *noise, *demand, sim)?)
        }
        Command::Simulate { params, switch_off, noise, sim, points } => {
            let t1 = resolve_t1(&exponential_profile(*params)?, *switch_off)?;
            curve_text(&stochastic_curve(*params, t1, *noise, sim, *points)?)?
        }
        Command::Curve {
            model,
            switch_off,
            points,
            stochastic,
        } => {
            let profile = model.profile()?;
            let t1 = resolve_t1(&profile, *switch_off)?;
            let rows = match (stochastic, model) {
                (Some((noise, sim)), ModelSpec::Exponential(p)) => stochastic_curve(*p, t1, *noise, sim, *points)?,
                _ => profile_curve(&profile, t1, *points)?,
            };
            curve_text(&rows)?
        }
    };
    Ok(out)
}

fn curve_text(rows: &[CurveRow]) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write_curve(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| CliError::Io(e.to_string()))
}

/// Runs a parsed configuration, writing the result to `--out` or `stdout`.
pub fn run<W: Write>(config: &RunConfig, stdout: &mut W) -> Result<(), CliError> {
    let text = command_output(config)?;
    match &config.output_path {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => Ok(stdout.write_all(text.as_bytes())?),
    }
}

/// Parses, runs and reports; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    if let Err(e) = Cli::try_parse_from(&argv) {
        use clap::error::ErrorKind;
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            print!("{e}");
            return 0;
        }
    }

    let stdout = io::stdout();
    let mut stdout = stdout.lock();
    let (err, format) = match parse_args(&argv) {
        Err(e) => (e, None),
        Ok(config) => match run(&config, &mut stdout) {
            Ok(()) => return 0,
            Err(e) => (e, Some(config.format)),
        },
    };
    let message = err.to_string().lines().next().unwrap_or_default().to_string();
    eprintln!("{}: {}", err.reason(), message);
    if format == Some(Format::Json) {
        let v = serde_json::json!({ "error": err.reason(), "message": message });
        let _ = writeln!(stdout, "{v}");
    }
    err.exit_code()
}
