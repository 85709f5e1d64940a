use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "evoeq", version, about = "Spectral-in-time solvers for evolutionary equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a preset or problem file, optionally as an initial value problem
    Solve(SolveArgs),
    /// Built-in ordinary and delay differential equations
    Ode(OdeArgs),
    /// Linear differential-algebraic equations `d M0 u + M1 u = 0`
    Dae(DaeArgs),
    /// Cell problems and oscillation sweeps
    Homogenize(HomogenizeArgs),
    /// Certified exponential decay rate of a parabolic model
    Stability(StabilityArgs),
    /// Weighted Fourier-Laplace transform of a signal
    Transform(TransformArgs),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    Auto,
    Value(f64),
}

impl FromStr for Rate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Rate::Auto);
        }
        let v: f64 = s.parse().map_err(|_| format!("expected a number or 'auto', got '{s}'"))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(format!("nu must be positive, got {v}"));
        }
        Ok(Rate::Value(v))
    }
}

fn split3(s: &str) -> Result<[&str; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    <[&str; 3]>::try_from(parts).map_err(|_| format!("expected three comma-separated values, got '{s}'"))
}

fn num<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse '{s}'"))
}

/// `t0,dt,n`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let [a, b, c] = split3(s)?;
        let g = GridSpec { t0: num(a)?, dt: num(b)?, n: num(c)? };
        if !(g.dt > 0.0 && g.t0.is_finite() && g.n >= 2) {
            return Err("grid needs finite t0, dt > 0 and n >= 2".into());
        }
        Ok(g)
    }
}

/// `a,b,m`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceSpec {
    pub a: f64,
    pub b: f64,
    pub m: usize,
}

impl FromStr for SpaceSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let [a, b, c] = split3(s)?;
        let sp = SpaceSpec { a: num(a)?, b: num(b)?, m: num(c)? };
        if !(sp.b > sp.a && sp.m >= 2) {
            return Err("space needs b > a and m >= 2".into());
        }
        Ok(sp)
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Output directory, created if missing
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Weight rate: a positive number or `auto`
    #[arg(long)]
    pub nu: Option<Rate>,
    /// Time grid `t0,dt,n`
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<GridSpec>,
    /// Space interval and cell count `a,b,m`
    #[arg(long, allow_hyphen_values = true)]
    pub space: Option<SpaceSpec>,
    /// Tolerance for the command's main check
    #[arg(long, value_parser = positive)]
    pub tol: Option<f64>,
    /// Seed for randomized inputs
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = num(s)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive number, got {s}"))
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    /// Preset name
    #[arg(long)]
    pub preset: Option<String>,
    /// Problem file (JSON)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Initial value instead of forcing; only `sin-mode`
    #[arg(long)]
    pub ivp: Option<String>,
}

#[derive(Debug, Args)]
pub struct OdeArgs {
    #[command(flatten)]
    pub common: Common,
    /// `delay` or `logistic`
    #[arg(long, default_value = "delay")]
    pub problem: String,
}

#[derive(Debug, Args)]
pub struct DaeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Built-in pair: `example-2x2` or `rlc`
    #[arg(long)]
    pub pair: Option<String>,
    /// Pair file (JSON with `m0` and `m1`)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Initial value, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub u0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5.0, value_parser = positive)]
    pub horizon: f64,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct HomogenizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// `ode-sin-memory`, `wave-periodic`, `cell-1d` or `laminate-2d`
    #[arg(long)]
    pub problem: String,
    /// Oscillation counts for the sweeps
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Piecewise constant coefficient on equal parts of the period
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub coeff: Option<Vec<f64>>,
    /// Cells per period side for the cell problems
    #[arg(long, default_value_t = 1024)]
    pub cells: usize,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub common: Common,
    /// `heat`, `dpl` or `delay-heat`
    #[arg(long, default_value = "heat")]
    pub model: String,
    /// Conductivity (heat, delay-heat)
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Delayed conductivity (delay-heat)
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub b: f64,
    /// Delay (delay-heat)
    #[arg(long, default_value_t = 0.5)]
    pub delay: f64,
    /// Heat-flux lag (dpl)
    #[arg(long, default_value_t = 0.3)]
    pub s_q: f64,
    /// Temperature-gradient lag (dpl)
    #[arg(long, default_value_t = 0.8)]
    pub s_theta: f64,
    /// Strip half-width for the memory term (dpl)
    #[arg(long, default_value_t = 1.0)]
    pub rho1: f64,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[command(flatten)]
    pub common: Common,
    /// Signal CSV (`t,re0,im0,...`)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Signal header JSON; defaults to the input path with a `.json` extension
    #[arg(long)]
    pub header: Option<PathBuf>,
    /// Built-in signal when no input is given: `pulse` or `random`
    #[arg(long, default_value = "pulse")]
    pub signal: String,
}
