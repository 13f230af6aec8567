//! Command-line syntax and the optional `key=value` config file.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use calpha_core::iv::OrderRule;

#[derive(Debug, Parser)]
#[command(name = "calpha", version, about = "Size, power, test, CI and power-bound studies for C(α)-type tests")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Empirical rejection frequencies under the null.
    Size(RunArgs),
    /// Rejection frequencies over a grid of alternatives.
    Power(RunArgs),
    /// One test on a CSV data set.
    Test(RunArgs),
    /// Confidence set for a scalar θ by test inversion.
    Ci(RunArgs),
    /// Tabulates the asymptotic power bounds.
    Bounds(BoundsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Sim,
    Iv,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Sim => "sim",
            Model::Iv => "iv",
        })
    }
}

/// `lo,hi,points` or a single value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        calpha_core::iv::linear_grid(self.lo, self.hi, self.points).expect("validated when parsed")
    }
}

impl FromStr for Grid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let num = |t: &str| t.parse::<f64>().ok().filter(|v| v.is_finite());
        match parts.as_slice() {
            [v] => num(v).map(|v| Grid { lo: v, hi: v, points: 1 }).ok_or_else(|| format!("bad grid '{s}'")),
            [lo, hi] | [lo, hi, _] => {
                let (lo, hi) = (num(lo), num(hi));
                let points = match parts.get(2) {
                    Some(p) => p.parse::<usize>().map_err(|_| format!("bad point count in grid '{s}'"))?,
                    None => crate::DEFAULT_CI_POINTS,
                };
                match (lo, hi) {
                    (Some(lo), Some(hi)) if lo < hi && points >= 2 => Ok(Grid { lo, hi, points }),
                    _ => Err(format!("grid '{s}' needs lo < hi and at least 2 points")),
                }
            }
            _ => Err(format!("grid must be lo,hi[,points] or a single value, got '{s}'")),
        }
    }
}

fn parse_order(s: &str) -> Result<OrderRule, String> {
    s.parse::<OrderRule>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value_t = Model::Sim)]
    pub model: Model,
    /// Design names, comma separated, or `all`.
    #[arg(long, value_delimiter = ',')]
    pub design: Vec<String>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Monte Carlo replications (default 2000; 2500 for Design 1 power surfaces).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Eigenvalue truncation level (default 1e-3 for sim, 1e-2 for iv).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// First-stage order rules: k:<int>, aic, bic (comma separated).
    #[arg(long, value_delimiter = ',', value_parser = parse_order)]
    pub order: Vec<OrderRule>,
    /// Tests to run: psi, wald (sim) or psi, ar (iv).
    #[arg(long, value_delimiter = ',')]
    pub tests: Vec<String>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// File of `key=value` lines mirroring the long flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV input for `test` and `ci`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Column roles, e.g. y=wage,x=educ,z1=exper+age,z2=qob.
    #[arg(long)]
    pub map: Option<String>,
    /// Prepend a constant column to Z1.
    #[arg(long)]
    pub intercept: bool,
    /// Null value(s) of θ, comma separated for vector θ.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Vec<f64>,
    /// θ grid `lo,hi,points` (power curves and CI inversion).
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<Grid>,
    /// First and second coordinates of the Design 1 alternative grid.
    #[arg(long, allow_hyphen_values = true)]
    pub tau1: Option<Grid>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau2: Option<Grid>,
    /// Read power grids as local alternatives `θ₀ + τ/√n`.
    #[arg(long)]
    pub local: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    /// Ranks r for the power envelope, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub r: Vec<usize>,
    /// Noncentrality grid `lo,hi,points`.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<Grid>,
    /// Efficient information for the two-sided bound.
    #[arg(long)]
    pub info: Option<f64>,
    /// τ grid for the two-sided bound.
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<Grid>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

const BOOL_FLAGS: [&str; 2] = ["intercept", "local"];

/// Splices the contents of `--config <file>` in front of the explicit flags
/// so that flags given on the command line win.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>, String> {
    let pos = argv.iter().position(|a| a == "--config" || a.starts_with("--config="));
    let Some(pos) = pos else {
        return Ok(argv);
    };
    let path = match argv[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => argv.get(pos + 1).cloned().ok_or("--config needs a path")?,
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let mut extra = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| format!("{path}:{}: expected key=value", lineno + 1))?;
        let (key, value) = (key.trim().trim_start_matches("--"), value.trim());
        if key == "config" {
            return Err(format!("{path}:{}: config files cannot nest", lineno + 1));
        }
        if BOOL_FLAGS.contains(&key) {
            match value {
                "true" | "1" | "yes" => extra.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                _ => return Err(format!("{path}:{}: {key} takes true or false", lineno + 1)),
            }
        } else {
            extra.push(format!("--{key}={value}"));
        }
    }
    // subcommand is argv[1]; file flags go right after it
    let insert_at = 2.min(argv.len());
    let mut out = argv[..insert_at].to_vec();
    out.extend(extra);
    out.extend(argv[insert_at..].iter().cloned());
    Ok(out)
}
