//! Feasible IV moments, the ψ test and the Anderson–Rubin comparator.
//!
//! Everything that does not depend on θ₀ (residualization on `Z₁` and the
//! leave-one-out first stage) is computed once in [`IvScorer::new`]; each
//! θ₀ then costs `O(n d_θ)` plus the test itself.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};

use super::design::IvData;
use crate::engine::{c_alpha_test, project_out, MomentSample, TestConfig, TestResult};
use crate::error::{Error, Result};
use crate::nonparam::series::{
    basis_size, information_criterion_design, legendre_design, loo_from_design, InformationCriterion,
    NormalizationBox,
};
use crate::numerics::linalg::pivoted_qr_basis;

/// Truncation level ν for the IV ψ test.
pub const IV_THRESHOLD: f64 = 1e-2;
/// Polynomial degrees searched by the information criteria.
pub const IC_ORDERS: [usize; 5] = [3, 4, 5, 6, 7];
/// Residual mean squares below this make the moment undefined.
const MIN_RESIDUAL_VARIANCE: f64 = 1e-12;

/// How the per-dimension Legendre degree of the first stage is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrderRule {
    Fixed(usize),
    Aic,
    Bic,
}

impl FromStr for OrderRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "aic" => Ok(OrderRule::Aic),
            "bic" => Ok(OrderRule::Bic),
            _ => t
                .strip_prefix("k:")
                .and_then(|k| k.parse().ok())
                .map(OrderRule::Fixed)
                .ok_or_else(|| Error::Input(format!("order rule must be k:<int>, aic or bic, got '{s}'"))),
        }
    }
}

impl fmt::Display for OrderRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderRule::Fixed(k) => write!(f, "k:{k}"),
            OrderRule::Aic => write!(f, "aic"),
            OrderRule::Bic => write!(f, "bic"),
        }
    }
}

/// First-stage options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstStage {
    pub rule: OrderRule,
    /// Append the columns of `Z₁` linearly to the series basis in `Z₂`.
    pub include_z1: bool,
}

impl FirstStage {
    pub fn new(rule: OrderRule) -> Self {
        Self { rule, include_z1: true }
    }
}

fn first_stage_design(data: &IvData, k: usize, include_z1: bool, bx: &NormalizationBox) -> Result<Array2<f64>> {
    let orders = vec![k; data.z2.ncols()];
    let poly = legendre_design(data.z2.view(), &orders, bx)?;
    if include_z1 && data.z1.ncols() > 0 {
        Ok(concatenate(Axis(1), &[poly.view(), data.z1.view()]).expect("same row count"))
    } else {
        Ok(poly)
    }
}

/// θ₀-free ingredients of the feasible moment and the AR statistic.
#[derive(Debug, Clone)]
pub struct IvScorer {
    /// `Y` residualized on `Z₁`.
    ry: Array1<f64>,
    /// `X` residualized on `Z₁`.
    rx: Array2<f64>,
    /// `π̂ᵢ - M̂ Z₁ᵢ`.
    instrument: Array2<f64>,
    /// `Z₂` residualized on `Z₁`.
    z2_perp: Array2<f64>,
    order: usize,
}

impl IvScorer {
    pub fn new(data: &IvData, stage: FirstStage) -> Result<Self> {
        let n = data.n();
        let dz2 = data.z2.ncols();
        if data.z1.ncols() > 0 {
            let (_, _, dropped) = pivoted_qr_basis(data.z1.view(), crate::engine::COLLINEARITY_TOL);
            if !dropped.is_empty() {
                return Err(Error::Collinear(format!("Z1 columns {dropped:?} are linearly dependent")));
            }
        }
        let bx = NormalizationBox::from_data(data.z2.view())?;
        let order = match stage.rule {
            OrderRule::Fixed(k) => k,
            OrderRule::Aic | OrderRule::Bic => {
                let crit = if stage.rule == OrderRule::Aic { InformationCriterion::Aic } else { InformationCriterion::Bic };
                let mut best: Option<(f64, usize)> = None;
                for &k in &IC_ORDERS {
                    if basis_size(&vec![k; dz2]) + data.z1.ncols() + 1 >= n {
                        break;
                    }
                    let design = first_stage_design(data, k, stage.include_z1, &bx)?;
                    let score = information_criterion_design(design.view(), data.x.view(), crit)?;
                    if best.is_none_or(|(b, _)| score < b) {
                        best = Some((score, k));
                    }
                }
                best.ok_or_else(|| Error::Input(format!("n = {n} is too small for every candidate order")))?.1
            }
        };
        let p = basis_size(&vec![order; dz2]) + if stage.include_z1 { data.z1.ncols() } else { 0 };
        if n <= p + data.z1.ncols() + 1 {
            return Err(Error::Input(format!(
                "n = {n} must exceed the first-stage basis ({p}) plus Z1 ({}) plus one",
                data.z1.ncols()
            )));
        }
        let design = first_stage_design(data, order, stage.include_z1, &bx)?;
        let pi_hat = loo_from_design(design.view(), data.x.view())?.values;

        let y_col = data.y.view().insert_axis(Axis(1));
        let ry = project_out(y_col, data.z1.view())?.residuals.column(0).to_owned();
        let rx = project_out(data.x.view(), data.z1.view())?.residuals;
        // M̂ Z₁ᵢ is the fitted value of X on Z₁
        let instrument = &pi_hat - &(&data.x - &rx);
        let z2_perp = project_out(data.z2.view(), data.z1.view())?.residuals;
        Ok(Self { ry, rx, instrument, z2_perp, order })
    }

    pub fn n(&self) -> usize {
        self.ry.len()
    }

    pub fn dim_theta(&self) -> usize {
        self.rx.ncols()
    }

    /// Selected per-dimension Legendre degree.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Out-of-sample first-stage instrument `π̂ᵢ - M̂Z₁ᵢ`.
    pub fn instrument(&self) -> &Array2<f64> {
        &self.instrument
    }

    fn check_theta(&self, theta0: &[f64]) -> Result<()> {
        if theta0.len() != self.dim_theta() {
            return Err(Error::Input(format!(
                "θ₀ has length {} but X has {} columns",
                theta0.len(),
                self.dim_theta()
            )));
        }
        if theta0.iter().any(|t| !t.is_finite()) {
            return Err(Error::Input("θ₀ must be finite".into()));
        }
        Ok(())
    }

    /// `ε̂(θ₀) = Y - X'θ₀ - Z₁'β̂(θ₀)`.
    pub fn residuals(&self, theta0: &[f64]) -> Result<Array1<f64>> {
        self.check_theta(theta0)?;
        Ok(&self.ry - &self.rx.dot(&ArrayView1::from(theta0)))
    }

    /// Rows `ŝ⁻¹ ε̂ᵢ (π̂ᵢ - M̂Z₁ᵢ)`.
    pub fn moment(&self, theta0: &[f64]) -> Result<MomentSample> {
        let eps = self.residuals(theta0)?;
        let s = eps.dot(&eps) / self.n() as f64;
        if !(s >= MIN_RESIDUAL_VARIANCE) {
            return Err(Error::DegenerateVariance(format!("residual mean square {s:e} at θ₀ = {theta0:?}")));
        }
        let mut rows = self.instrument.clone();
        for (mut row, e) in rows.axis_iter_mut(Axis(0)).zip(eps.iter()) {
            row *= e / s;
        }
        MomentSample::new(rows)
    }

    pub fn psi(&self, theta0: &[f64], alpha: f64, threshold: f64) -> Result<TestResult> {
        c_alpha_test(&self.moment(theta0)?, &TestConfig::thresholded(alpha, threshold))
    }

    /// Heteroskedasticity-robust AR statistic with `Z₂` as instruments after
    /// partialling out `Z₁`.
    pub fn ar(&self, theta0: &[f64], alpha: f64) -> Result<TestResult> {
        ar_statistic(&self.residuals(theta0)?, &self.z2_perp, alpha)
    }
}

fn ar_statistic(eps: &Array1<f64>, z2_perp: &Array2<f64>, alpha: f64) -> Result<TestResult> {
    let mut rows = z2_perp.clone();
    for (mut row, e) in rows.axis_iter_mut(Axis(0)).zip(eps.iter()) {
        row *= *e;
    }
    c_alpha_test(&MomentSample::new(rows)?, &TestConfig::full_rank(alpha))
}

/// Feasible moment rows at θ₀.
pub fn feasible_moment_iv(data: &IvData, theta0: &[f64], rule: OrderRule) -> Result<MomentSample> {
    IvScorer::new(data, FirstStage::new(rule))?.moment(theta0)
}

pub fn psi_test_iv(data: &IvData, theta0: &[f64], alpha: f64, threshold: f64, rule: OrderRule) -> Result<TestResult> {
    IvScorer::new(data, FirstStage::new(rule))?.psi(theta0, alpha, threshold)
}

pub fn ar_test(data: &IvData, theta0: &[f64], alpha: f64) -> Result<TestResult> {
    // the AR statistic never touches the first stage
    if theta0.len() != data.dim_theta() {
        return Err(Error::Input(format!("θ₀ has length {} but X has {} columns", theta0.len(), data.dim_theta())));
    }
    let z1 = data.z1.view();
    let ry = project_out(data.y.view().insert_axis(Axis(1)), z1)?.residuals;
    let rx = project_out(data.x.view(), z1)?.residuals;
    let eps = ry.column(0).to_owned() - rx.dot(&ArrayView1::from(theta0));
    ar_statistic(&eps, &project_out(data.z2.view(), z1)?.residuals, alpha)
}
