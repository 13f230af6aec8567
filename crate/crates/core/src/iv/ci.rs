//! Confidence sets for scalar θ by inverting the ψ test on a grid.

use rayon::prelude::*;

use super::moments::IvScorer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CiResult {
    pub grid: Vec<f64>,
    pub accepted: Vec<bool>,
    /// Smallest and largest accepted grid points; `None` when nothing is accepted.
    pub interval: Option<(f64, f64)>,
    /// The accepted points do not form one run of consecutive grid points.
    pub disconnected: bool,
}

impl CiResult {
    pub fn is_empty(&self) -> bool {
        self.interval.is_none()
    }

    fn from_decisions(grid: Vec<f64>, accepted: Vec<bool>) -> Self {
        let first = accepted.iter().position(|&a| a);
        let last = accepted.iter().rposition(|&a| a);
        let (interval, disconnected) = match (first, last) {
            (Some(a), Some(b)) => (Some((grid[a], grid[b])), accepted[a..=b].iter().any(|&x| !x)),
            _ => (None, false),
        };
        Self { grid, accepted, interval, disconnected }
    }
}

/// `points` equally spaced values from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Input(format!("grid needs lo < hi and at least 2 points, got ({lo}, {hi}, {points})")));
    }
    let last = (points - 1) as f64;
    Ok((0..points).map(|k| if k + 1 == points { hi } else { (lo * (last - k as f64) + hi * k as f64) / last }).collect())
}

/// Accepts every grid value at which the ψ test does not reject.
pub fn invert_ci(scorer: &IvScorer, grid: Vec<f64>, alpha: f64, threshold: f64) -> Result<CiResult> {
    if scorer.dim_theta() != 1 {
        return Err(Error::Input(format!("CI inversion needs scalar θ, got dimension {}", scorer.dim_theta())));
    }
    let accepted = grid
        .par_iter()
        .map(|&t| scorer.psi(&[t], alpha, threshold).map(|r| !r.reject))
        .collect::<Result<Vec<_>>>()?;
    Ok(CiResult::from_decisions(grid, accepted))
}
