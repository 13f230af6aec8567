//! IV simulation designs.

use std::fmt;

use ndarray::{array, Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mc::rng_for;
use crate::numerics::linalg::cholesky;
use crate::sim::{link_eval, LinkFamily};

/// Null value tested in the simulation designs.
pub const IV_THETA0: f64 = 0.0;
/// Coefficient on the constant `Z₁ = 1`.
pub const IV_BETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IvVariant {
    /// Two endogenous regressors, each driven by one instrument.
    Design1,
    /// One endogenous regressor driven by the average of both instrument signals.
    Design2,
}

/// One first-stage component `π_i = f_j` with the single-index link shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PiSpec {
    pub family: LinkFamily,
    pub scale_index: usize,
}

impl PiSpec {
    pub fn new(family: LinkFamily, scale_index: usize) -> Result<Self> {
        family.scale(scale_index)?;
        Ok(Self { family, scale_index })
    }

    pub fn eval(&self, z: f64) -> f64 {
        // scale index validated at construction
        link_eval(self.family, self.family.scale(self.scale_index).unwrap_or(1.0), z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvDesign {
    pub variant: IvVariant,
    pub pi: [PiSpec; 2],
    pub n: usize,
    /// Data-generating θ; length 2 for Design 1, 1 for Design 2.
    pub theta_true: Vec<f64>,
}

fn family_tag(f: LinkFamily) -> &'static str {
    match f {
        LinkFamily::Exponential => "exp",
        LinkFamily::Logistic => "log",
    }
}

impl IvDesign {
    pub fn new(variant: IvVariant, pi: [PiSpec; 2], n: usize) -> Self {
        let theta_true = vec![IV_THETA0; variant.dim_theta()];
        Self { variant, pi, n, theta_true }
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != self.variant.dim_theta() {
            return Err(Error::Input(format!(
                "{} needs θ of length {}, got {}",
                self.name(),
                self.variant.dim_theta(),
                theta.len()
            )));
        }
        self.theta_true = theta;
        Ok(self)
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    /// `d1-exp-log-1-3`: variant, the two π families, then `j₁-j₂`.
    pub fn name(&self) -> String {
        let v = match self.variant {
            IvVariant::Design1 => "d1",
            IvVariant::Design2 => "d2",
        };
        format!(
            "{v}-{}-{}-{}-{}",
            family_tag(self.pi[0].family),
            family_tag(self.pi[1].family),
            self.pi[0].scale_index,
            self.pi[1].scale_index
        )
    }

    /// Parses `d1-exp-exp-2` (both scales 2) or `d1-exp-log-1-3`.
    pub fn parse(name: &str, n: usize) -> Result<Self> {
        let bad = || {
            Error::Input(format!(
                "unknown IV design '{name}' (expected d1|d2-<exp|log>-<exp|log>-<j> or ...-<j1>-<j2>, j in 1..3)"
            ))
        };
        let parts: Vec<&str> = name.trim().split('-').collect();
        if parts.len() != 4 && parts.len() != 5 {
            return Err(bad());
        }
        let variant = match parts[0].to_ascii_lowercase().as_str() {
            "d1" => IvVariant::Design1,
            "d2" => IvVariant::Design2,
            _ => return Err(bad()),
        };
        let f1: LinkFamily = parts[1].parse().map_err(|_| bad())?;
        let f2: LinkFamily = parts[2].parse().map_err(|_| bad())?;
        let j1: usize = parts[3].parse().map_err(|_| bad())?;
        let j2: usize = if parts.len() == 5 { parts[4].parse().map_err(|_| bad())? } else { j1 };
        let pi = [PiSpec::new(f1, j1).map_err(|_| bad())?, PiSpec::new(f2, j2).map_err(|_| bad())?];
        Ok(Self::new(variant, pi, n))
    }
}

impl IvVariant {
    pub fn dim_theta(self) -> usize {
        match self {
            IvVariant::Design1 => 2,
            IvVariant::Design2 => 1,
        }
    }
}

impl fmt::Display for IvDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (n = {})", self.name(), self.n)
    }
}

/// `Y = X'θ + Z₁'β + ε` with instruments `Z₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct IvData {
    pub y: Array1<f64>,
    pub x: Array2<f64>,
    pub z1: Array2<f64>,
    pub z2: Array2<f64>,
}

impl IvData {
    pub fn new(y: Array1<f64>, x: Array2<f64>, z1: Array2<f64>, z2: Array2<f64>) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || z1.nrows() != n || z2.nrows() != n {
            return Err(Error::Input(format!(
                "row counts differ: y {n}, x {}, z1 {}, z2 {}",
                x.nrows(),
                z1.nrows(),
                z2.nrows()
            )));
        }
        if x.ncols() == 0 || z2.ncols() == 0 {
            return Err(Error::Input("x and z2 need at least one column".into()));
        }
        let all = y.iter().chain(x.iter()).chain(z1.iter()).chain(z2.iter());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("IV data contain non-finite values".into()));
        }
        Ok(Self { y, x, z1, z2 })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim_theta(&self) -> usize {
        self.x.ncols()
    }
}

/// Draws one data set; also returns the structural errors `ε`.
pub fn simulate_iv_with_errors<R: Rng + ?Sized>(design: &IvDesign, rng: &mut R) -> (IvData, Array1<f64>) {
    let n = design.n;
    let z_chol = cholesky(array![[1.0, 0.4], [0.4, 1.0]].view()).expect("positive definite");
    let (err_chol, dx) = match design.variant {
        IvVariant::Design1 => {
            let cov = array![[1.0, 0.9, 0.9], [0.9, 1.0, 0.7], [0.9, 0.7, 1.0]];
            (cholesky(cov.view()).expect("positive definite"), 2)
        }
        IvVariant::Design2 => (cholesky(array![[1.0, 0.95], [0.95, 1.0]].view()).expect("positive definite"), 1),
    };
    let k = err_chol.nrows();
    let mut y = Array1::zeros(n);
    let mut x = Array2::zeros((n, dx));
    let z1 = Array2::ones((n, 1));
    let mut z2 = Array2::zeros((n, 2));
    let mut eps = Array1::zeros(n);
    let mut u = vec![0.0; k];
    for i in 0..n {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        let za = z_chol[[0, 0]] * a;
        let zb = z_chol[[1, 0]] * a + z_chol[[1, 1]] * b;
        let w: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
        for r in 0..k {
            u[r] = (0..=r).map(|c| err_chol[[r, c]] * w[c]).sum();
        }
        let p1 = design.pi[0].eval(za);
        let p2 = design.pi[1].eval(zb);
        let e = match design.variant {
            IvVariant::Design1 => {
                x[[i, 0]] = p1 + u[1];
                x[[i, 1]] = p2 + u[2];
                u[0]
            }
            IvVariant::Design2 => {
                let e = (1.0 + za.sin().powi(2)).sqrt() * u[0];
                let v = (1.0 + zb.cos().powi(2)).sqrt() * u[1];
                x[[i, 0]] = 0.5 * (p1 + p2) + v;
                e
            }
        };
        let index: f64 = (0..dx).map(|c| x[[i, c]] * design.theta_true[c]).sum();
        y[i] = index + IV_BETA + e;
        z2[[i, 0]] = za;
        z2[[i, 1]] = zb;
        eps[i] = e;
    }
    (IvData { y, x, z1, z2 }, eps)
}

pub fn simulate_iv_with<R: Rng + ?Sized>(design: &IvDesign, rng: &mut R) -> IvData {
    simulate_iv_with_errors(design, rng).0
}

/// Deterministic draw for a given seed.
pub fn simulate_iv(design: &IvDesign, seed: u64) -> IvData {
    let mut rng = rng_for(seed, 0, 0);
    simulate_iv_with(design, &mut rng)
}
