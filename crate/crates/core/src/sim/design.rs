//! Single-index simulation designs: link functions, covariates and errors.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, StudentT, Uniform};

use crate::error::{Error, Result};
use crate::mc::rng_for;

/// Link function families with scales `c_j`, j = 1, 2, 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkFamily {
    /// `5 exp(-v² / 2c²)`
    Exponential,
    /// `25 / (1 + exp(-v / c))`
    Logistic,
}

impl LinkFamily {
    pub fn scale(self, j: usize) -> Result<f64> {
        let table = match self {
            LinkFamily::Exponential => [1.0, 2.0, 4.0],
            LinkFamily::Logistic => [1.0, 4.0, 32.0],
        };
        (1..=3)
            .contains(&j)
            .then(|| table[j - 1])
            .ok_or_else(|| Error::Input(format!("scale index must be 1, 2 or 3, got {j}")))
    }

    fn tag(self) -> &'static str {
        match self {
            LinkFamily::Exponential => "exp",
            LinkFamily::Logistic => "log",
        }
    }
}

impl FromStr for LinkFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exp" | "exponential" => Ok(LinkFamily::Exponential),
            "log" | "logistic" => Ok(LinkFamily::Logistic),
            other => Err(Error::Input(format!("unknown link family '{other}' (expected exp or log)"))),
        }
    }
}

pub fn link_eval(family: LinkFamily, c: f64, v: f64) -> f64 {
    match family {
        LinkFamily::Exponential => 5.0 * (-v * v / (2.0 * c * c)).exp(),
        LinkFamily::Logistic => 25.0 / (1.0 + (-v / c).exp()),
    }
}

pub fn link_deriv(family: LinkFamily, c: f64, v: f64) -> f64 {
    match family {
        LinkFamily::Exponential => -v / (c * c) * link_eval(family, c, v),
        LinkFamily::Logistic => {
            // 25 σ(v/c)(1 - σ(v/c)) / c, written to avoid overflow for large |v|
            let e = (-(v / c).abs()).exp();
            25.0 * e / ((1.0 + e) * (1.0 + e) * c)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    /// `υ / √(3/2)` with `υ ~ t(6)`: unit variance.
    HomoskedasticT6,
    /// `N(0, 1 + sin(X₁)²)`.
    HeteroskedasticNormal,
}

impl ErrorKind {
    fn tag(self) -> &'static str {
        match self {
            ErrorKind::HomoskedasticT6 => "homo",
            ErrorKind::HeteroskedasticNormal => "hetero",
        }
    }
}

/// One cell of the single-index simulation study (K = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimDesign {
    pub link_family: LinkFamily,
    pub scale_index: usize,
    pub error_kind: ErrorKind,
    pub n: usize,
    pub theta_true: f64,
}

/// Null value used throughout the single-index study.
pub const SIM_THETA0: f64 = 1.0;

impl SimDesign {
    pub fn new(link_family: LinkFamily, scale_index: usize, error_kind: ErrorKind, n: usize) -> Result<Self> {
        link_family.scale(scale_index)?;
        Ok(Self { link_family, scale_index, error_kind, n, theta_true: SIM_THETA0 })
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta_true = theta;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn c(&self) -> f64 {
        self.link_family.scale(self.scale_index).expect("validated at construction")
    }

    /// Design name in the form `exp-f1-homo`.
    pub fn name(&self) -> String {
        format!("{}-f{}-{}", self.link_family.tag(), self.scale_index, self.error_kind.tag())
    }

    /// Parses `exp-f1-homo`; `n` and `theta_true` come from the caller.
    pub fn parse(name: &str, n: usize) -> Result<Self> {
        let parts: Vec<&str> = name.split('-').collect();
        let bad = || Error::Input(format!("invalid single-index design '{name}'; expected <exp|log>-f<1|2|3>-<homo|hetero>"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let family: LinkFamily = parts[0].parse().map_err(|_| bad())?;
        let j: usize = parts[1].strip_prefix('f').and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let kind = match parts[2] {
            "homo" => ErrorKind::HomoskedasticT6,
            "hetero" => ErrorKind::HeteroskedasticNormal,
            _ => return Err(bad()),
        };
        Self::new(family, j, kind, n).map_err(|_| bad())
    }

    /// All twelve cells of the size table.
    pub fn all(n: usize) -> Vec<SimDesign> {
        let mut out = Vec::new();
        for family in [LinkFamily::Exponential, LinkFamily::Logistic] {
            for kind in [ErrorKind::HomoskedasticT6, ErrorKind::HeteroskedasticNormal] {
                for j in 1..=3 {
                    out.push(SimDesign::new(family, j, kind, n).unwrap());
                }
            }
        }
        out
    }
}

impl fmt::Display for SimDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Observations `(Y, X₁, X₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub y: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

impl SimData {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Index `X₁ + X₂ θ`.
    pub fn index(&self, theta: f64) -> Vec<f64> {
        self.x1.iter().zip(&self.x2).map(|(a, b)| a + b * theta).collect()
    }

    /// Copy with rows reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> SimData {
        SimData {
            y: perm.iter().map(|&i| self.y[i]).collect(),
            x1: perm.iter().map(|&i| self.x1[i]).collect(),
            x2: perm.iter().map(|&i| self.x2[i]).collect(),
        }
    }
}

/// Draws the covariates and errors; also returns the errors.
pub fn simulate_sim_with_errors<R: Rng + ?Sized>(design: &SimDesign, rng: &mut R) -> (SimData, Vec<f64>) {
    let n = design.n;
    let unif = Uniform::new(-1.0, 1.0).expect("valid range");
    let t6 = StudentT::new(6.0).expect("valid dof");
    let std_normal = Normal::new(0.0, 1.0).expect("valid sd");
    let c = design.c();
    let t_scale = 1.5f64.sqrt();
    let mut y = Vec::with_capacity(n);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut eps = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = unif.sample(rng);
        let z2: f64 = unif.sample(rng);
        let a = z1;
        let b = 0.2 * z1 + 0.4 * z2 + 0.8;
        let e = match design.error_kind {
            ErrorKind::HomoskedasticT6 => t6.sample(rng) / t_scale,
            ErrorKind::HeteroskedasticNormal => {
                let sd = (1.0 + a.sin().powi(2)).sqrt();
                sd * std_normal.sample(rng)
            }
        };
        let v = a + b * design.theta_true;
        y.push(link_eval(design.link_family, c, v) + e);
        x1.push(a);
        x2.push(b);
        eps.push(e);
    }
    (SimData { y, x1, x2 }, eps)
}

pub fn simulate_sim_with<R: Rng + ?Sized>(design: &SimDesign, rng: &mut R) -> SimData {
    simulate_sim_with_errors(design, rng).0
}

/// Deterministic draw for a given seed.
pub fn simulate_sim(design: &SimDesign, seed: u64) -> SimData {
    let mut rng = rng_for(seed, 0, 0);
    simulate_sim_with(design, &mut rng)
}
