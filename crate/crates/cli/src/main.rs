//! `tdoa`: locate, map, simulate, track and evaluate from the command line.
//!
//! Exit codes: 0 ok, 2 input error, 3 degenerate geometry, 4 non-convergence
//! (only with `--strict`).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tdoa_core::dop::DopKind;
use tdoa_core::{EstimatorKind, Point, TdoaError};

#[derive(Debug, Parser)]
#[command(name = "tdoa", version, about = "Planar TDoA localization toolkit")]
pub struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Exit with code 4 when an iterative solve or tracker step did not converge.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Locate one tag from an anchors file and a TDoA CSV.
    Locate(LocateArgs),
    /// Write a DoP heatmap over a rectangular grid.
    DopMap(DopMapArgs),
    /// Draw the noisy measurements of a scenario.
    Simulate(ScenarioArgs),
    /// Run a tracking scenario and write the trajectory.
    Track(ScenarioArgs),
    /// Run scenarios on shared seeds and print the comparison table.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct LocateArgs {
    /// Anchors JSON file.
    pub anchors: PathBuf,
    /// TDoA CSV (`pair_i,pair_j,d_ij_m` or `anchor,timestamp_s`).
    pub tdoa: PathBuf,
    /// linear-central:<k>, linear-symmetric or gauss-newton.
    #[arg(short, long, default_value = "gauss-newton")]
    pub estimator: EstimatorKind,
    /// Gauss-Newton starting point as `x,y` (default: anchor centroid).
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub init: Option<Point>,
    /// Gauss-Newton step-norm tolerance, metres.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Gauss-Newton iteration budget.
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct DopMapArgs {
    /// Anchors JSON file.
    pub anchors: PathBuf,
    #[arg(long, default_value = "nonlinear-kappa")]
    pub kind: DopKind,
    /// Central anchor (1-based), required for linear-cond.
    #[arg(long)]
    pub central: Option<usize>,
    /// Window as `x_min,x_max,y_min,y_max` (default: anchor bounding box plus margin).
    #[arg(long, value_parser = parse_bounds, allow_hyphen_values = true)]
    pub bounds: Option<[f64; 4]>,
    /// Margin around the anchors when `--bounds` is absent, metres.
    #[arg(long, default_value_t = 2.0)]
    pub margin: f64,
    /// Cells per side (`N` or `NX,NY`).
    #[arg(long, default_value = "200", value_parser = parse_res)]
    pub res: (usize, usize),
    /// Output file (default: stdout).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Output format (default: from the file extension, else csv).
    #[arg(long)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario JSON file or built-in scenario name.
    pub scenario: String,
    /// Noise seed (default: the file's seed, else 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the scenario's range noise, metres.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Output file (default: stdout).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Scenario files or built-in names (default: every built-in scenario).
    pub scenarios: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Write the full reports, per-sample errors included, as JSON.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Geometry(String),
    NotConverged(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Geometry(_) => 3,
            CliError::NotConverged(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Geometry(m) | CliError::NotConverged(m) => m,
        }
    }
}

impl From<TdoaError> for CliError {
    fn from(e: TdoaError) -> Self {
        if e.is_geometric() {
            CliError::Geometry(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; N] = parts
        .try_into()
        .map_err(|_| format!("expected {N} comma-separated numbers"))?;
    if arr.iter().any(|v| !v.is_finite()) {
        return Err("values must be finite".into());
    }
    Ok(arr)
}

fn parse_point(s: &str) -> Result<Point, String> {
    let [x, y] = parse_floats::<2>(s)?;
    Ok(Point::new(x, y))
}

fn parse_bounds(s: &str) -> Result<[f64; 4], String> {
    let b = parse_floats::<4>(s)?;
    if b[0] >= b[1] || b[2] >= b[3] {
        return Err("need x_min < x_max and y_min < y_max".into());
    }
    Ok(b)
}

fn parse_res(s: &str) -> Result<(usize, usize), String> {
    let parse = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}"));
    let (nx, ny) = match s.split_once(',') {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let n = parse(s)?;
            (n, n)
        }
    };
    if nx == 0 || ny == 0 {
        return Err("resolution must be >= 1".into());
    }
    Ok((nx, ny))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
