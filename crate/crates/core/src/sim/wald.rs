//! Wald test built on a semiparametric least-squares estimator of θ.
//!
//! `θ̂` minimizes the profile criterion `n⁻¹ Σ (Yᵢ - f̂_θ(V_θ,ᵢ))²` over
//! `[-10, 10]`, where `f̂_θ` is the cross-fitted smoothing spline of `Y` on
//! the index `V_θ`. The variance estimate is
//! `σ̂² / n⁻¹ Σ (f̂'(V_θ̂,ᵢ)[X₂ᵢ - Ẑ(V_θ̂,ᵢ)])²`.

use super::design::SimData;
use super::moments::{cross_fit, SIM_MIN_N};
use crate::engine::TestResult;
use crate::error::{Error, Result};

pub const WALD_THETA_LO: f64 = -10.0;
pub const WALD_THETA_HI: f64 = 10.0;
/// Points on the coarse profile grid.
pub const WALD_GRID_POINTS: usize = 4001;
const GOLDEN_ITERS: usize = 30;
const COARSE_FACTOR: usize = 10;
const LOCAL_MINIMA: usize = 3;
/// Profiles whose range is below this are treated as flat.
const FLAT_PROFILE_TOL: f64 = 1e-12;

/// Estimator, variance and test decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldOutcome {
    pub theta_hat: f64,
    /// Estimated asymptotic variance of `√n(θ̂ - θ)`.
    pub avar: f64,
    pub result: TestResult,
    /// True when the profile was flat and no test was performed.
    pub degenerate: bool,
}

fn profile(data: &SimData, theta: f64) -> Result<f64> {
    let v = data.index(theta);
    let cf = cross_fit(data, &v, false)?;
    let n = data.n() as f64;
    Ok(data.y.iter().zip(&cf.f).map(|(y, f)| (y - f).powi(2)).sum::<f64>() / n)
}

/// Minimizes the profile criterion over `[lo, hi]` at the resolution of a
/// `points` grid. A coarse scan with a tenth of the resolution locates the
/// best local minima, the full-resolution grid is evaluated around each of
/// them and golden-section search polishes the winner.
/// Returns `(argmin, minimum, max - min over the coarse scan)`.
pub fn profile_argmin(data: &SimData, lo: f64, hi: f64, points: usize) -> Result<(f64, f64, f64)> {
    if points < 3 || !(lo < hi) {
        return Err(Error::Input("profile grid needs lo < hi and at least 3 points".into()));
    }
    let fine_step = (hi - lo) / (points - 1) as f64;
    let coarse_points = ((points - 1) / COARSE_FACTOR).max(2) + 1;
    let coarse_step = (hi - lo) / (coarse_points - 1) as f64;
    let coarse = (0..coarse_points)
        .map(|k| profile(data, lo + coarse_step * k as f64))
        .collect::<Result<Vec<_>>>()?;
    let lowest = coarse.iter().cloned().fold(f64::INFINITY, f64::min);
    let highest = coarse.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = highest - lowest;

    let mut minima: Vec<usize> = (0..coarse_points)
        .filter(|&k| {
            (k == 0 || coarse[k] <= coarse[k - 1]) && (k + 1 == coarse_points || coarse[k] <= coarse[k + 1])
        })
        .collect();
    minima.sort_by(|&a, &b| coarse[a].total_cmp(&coarse[b]).then(a.cmp(&b)));
    minima.truncate(LOCAL_MINIMA);

    let mut best = (lo + coarse_step * minima[0] as f64, coarse[minima[0]]);
    for &k in &minima {
        let centre = lo + coarse_step * k as f64;
        let a = (centre - coarse_step).max(lo);
        let b = (centre + coarse_step).min(hi);
        let first = ((a - lo) / fine_step).round() as usize;
        let last = (((b - lo) / fine_step).round() as usize).min(points - 1);
        for j in first..=last {
            let t = lo + fine_step * j as f64;
            let q = profile(data, t)?;
            if q < best.1 || (q == best.1 && t < best.0) {
                best = (t, q);
            }
        }
    }

    let (mut a, mut b) = ((best.0 - fine_step).max(lo), (best.0 + fine_step).min(hi));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = profile(data, c)?;
    let mut fd = profile(data, d)?;
    for _ in 0..GOLDEN_ITERS {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = profile(data, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = profile(data, d)?;
        }
    }
    let polished = if fc < fd { (c, fc) } else { (d, fd) };
    let (theta, value) = if polished.1 < best.1 { polished } else { best };
    Ok((theta, value, range))
}

/// Wald test of `θ = θ₀` with the default grid.
pub fn wald_test_ichimura(data: &SimData, theta0: f64, alpha: f64) -> Result<WaldOutcome> {
    wald_test_with_grid(data, theta0, alpha, WALD_GRID_POINTS)
}

pub fn wald_test_with_grid(data: &SimData, theta0: f64, alpha: f64, points: usize) -> Result<WaldOutcome> {
    let n = data.n();
    if n < SIM_MIN_N {
        return Err(Error::Input(format!("Wald test needs n >= {SIM_MIN_N}, got {n}")));
    }
    let (theta_hat, sigma2, range) = profile_argmin(data, WALD_THETA_LO, WALD_THETA_HI, points)?;
    if range < FLAT_PROFILE_TOL {
        return Ok(WaldOutcome { theta_hat, avar: f64::INFINITY, result: TestResult::degenerate(), degenerate: true });
    }
    let v = data.index(theta_hat);
    let cf = cross_fit(data, &v, true)?;
    let info = (0..n)
        .map(|i| (cf.f_prime[i] * (data.x2[i] - cf.x2_mean[i])).powi(2))
        .sum::<f64>()
        / n as f64;
    if !(info > 0.0) {
        return Ok(WaldOutcome { theta_hat, avar: f64::INFINITY, result: TestResult::degenerate(), degenerate: true });
    }
    let avar = sigma2 / info;
    let stat = n as f64 * (theta_hat - theta0).powi(2) / avar;
    let result = TestResult::from_statistic(stat, 1, alpha)?;
    Ok(WaldOutcome { theta_hat, avar, result, degenerate: false })
}
