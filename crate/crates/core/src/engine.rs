//! Model-agnostic C(α) test engine.
//!
//! A model backend supplies an `n × d` matrix of per-observation moment
//! evaluations. The engine aggregates them into `ĝ = n^{-1/2} Σᵢ gᵢ`,
//! estimates `V̌ = n⁻¹ Σᵢ gᵢ gᵢᵀ`, thresholds the eigenvalues of `V̌` to obtain
//! a pseudo-inverse `Λ̂` of estimated rank `r̂`, and rejects when
//! `Ŝ = ĝᵀ Λ̂ ĝ` exceeds the `1 - α` quantile of `χ²_{r̂}`. At `r̂ = 0` the test
//! never rejects.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::numerics::linalg::{pinv_from_eigen, pivoted_qr_basis};
use crate::numerics::{
    chi2_quantile, chi2_sf, noncentral_chi2_cdf, normal_cdf, normal_quantile, sym_eigen,
    RegularizedInverse, SymmetricMatrix,
};

/// Condition number beyond which a "known full rank" covariance is refused.
pub const FULL_RANK_MAX_CONDITION: f64 = 1e12;

/// Per-observation moment evaluations, one row per observation.
#[derive(Debug, Clone)]
pub struct MomentSample {
    rows: Array2<f64>,
}

impl MomentSample {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        let (n, d) = rows.dim();
        if n < 2 || d == 0 {
            return Err(Error::Input(format!(
                "moment sample needs n >= 2 and d >= 1, got {n}x{d}"
            )));
        }
        if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite moment at observation {}, component {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { rows })
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn into_rows(self) -> Array2<f64> {
        self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig {
    pub alpha: f64,
    /// Eigenvalue truncation level ν.
    pub threshold: f64,
    /// Invert `V̌` directly with rank `d` instead of thresholding.
    pub known_full_rank: bool,
}

impl TestConfig {
    pub fn thresholded(alpha: f64, threshold: f64) -> Self {
        Self { alpha, threshold, known_full_rank: false }
    }

    pub fn full_rank(alpha: f64) -> Self {
        Self { alpha, threshold: 0.0, known_full_rank: true }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.threshold >= 0.0) || !self.threshold.is_finite() {
            return Err(Error::Domain(format!(
                "threshold must be finite and >= 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub rank: usize,
    /// `+∞` when the rank is zero.
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
}

impl TestResult {
    /// The never-rejecting outcome used whenever no direction is identified.
    pub fn degenerate() -> Self {
        Self {
            statistic: 0.0,
            rank: 0,
            critical_value: f64::INFINITY,
            p_value: 1.0,
            reject: false,
        }
    }

    /// Compares a statistic against the `χ²_rank` critical value.
    pub fn from_statistic(statistic: f64, rank: usize, alpha: f64) -> Result<Self> {
        if rank == 0 {
            return Ok(Self::degenerate());
        }
        let critical_value = chi2_quantile(rank, 1.0 - alpha)?;
        let statistic = statistic.max(0.0);
        Ok(Self {
            statistic,
            rank,
            critical_value,
            p_value: chi2_sf(rank, statistic)?,
            reject: statistic > critical_value,
        })
    }
}

/// `n^{-1/2}` times the column sums.
pub fn aggregate(ms: &MomentSample) -> Array1<f64> {
    let scale = 1.0 / (ms.n() as f64).sqrt();
    ms.rows.sum_axis(ndarray::Axis(0)) * scale
}

/// `n⁻¹ Σᵢ gᵢ gᵢᵀ`.
pub fn second_moment(ms: &MomentSample) -> SymmetricMatrix {
    let n = ms.n() as f64;
    let gram = ms.rows.t().dot(&ms.rows) / n;
    SymmetricMatrix::new(gram).expect("Gram matrix of finite rows is finite")
}

/// `ĝᵀ Λ̂ ĝ`, clamped at zero against rounding.
pub fn c_alpha_statistic(ghat: ArrayView1<f64>, lambda: &RegularizedInverse) -> Result<f64> {
    let d = lambda.pseudo_inverse.dim();
    if ghat.len() != d {
        return Err(Error::Input(format!(
            "moment vector has length {}, inverse has dimension {d}",
            ghat.len()
        )));
    }
    Ok(lambda.pseudo_inverse.quad_form(ghat).max(0.0))
}

/// Inverse of `V̌` with rank `d`, refusing numerically singular input.
pub fn full_rank_inverse(v: &SymmetricMatrix) -> Result<RegularizedInverse> {
    let eig = sym_eigen(v)?;
    let d = v.dim();
    let largest = eig.eigenvalues[0];
    let smallest = eig.eigenvalues[d - 1];
    let condition = if smallest > 0.0 { largest / smallest } else { f64::INFINITY };
    if !(smallest > 0.0) || condition > FULL_RANK_MAX_CONDITION {
        return Err(Error::Singular { smallest_eigenvalue: smallest, condition });
    }
    let inv = pinv_from_eigen(&eig, 0.0);
    debug_assert_eq!(inv.rank, d);
    Ok(inv)
}

/// Runs the full test on a moment sample.
pub fn c_alpha_test(ms: &MomentSample, cfg: &TestConfig) -> Result<TestResult> {
    cfg.validate()?;
    let ghat = aggregate(ms);
    let vcheck = second_moment(ms);
    let lambda = if cfg.known_full_rank {
        full_rank_inverse(&vcheck)?
    } else {
        crate::numerics::threshold_pinv(&vcheck, cfg.threshold)?
    };
    let stat = c_alpha_statistic(ghat.view(), &lambda)?;
    TestResult::from_statistic(stat, lambda.rank, cfg.alpha)
}

/// Candidate moments with their nuisance-score components removed.
#[derive(Debug, Clone)]
pub struct Projection {
    pub residuals: Array2<f64>,
    /// Nuisance columns found linearly dependent on the others and ignored.
    pub dropped: Vec<usize>,
}

/// Relative pivot tolerance used to detect collinear nuisance scores.
pub const COLLINEARITY_TOL: f64 = 1e-10;

/// Least-squares residuals of each candidate column on the nuisance scores.
///
/// Dependent nuisance columns are detected by pivoted QR and dropped; their
/// indices are reported in [`Projection::dropped`].
pub fn project_out(candidates: ArrayView2<f64>, nuisance: ArrayView2<f64>) -> Result<Projection> {
    let (n, _) = candidates.dim();
    let (nn, m) = nuisance.dim();
    if nn != n {
        return Err(Error::Input(format!(
            "candidates have {n} rows but nuisance scores have {nn}"
        )));
    }
    if n <= m {
        return Err(Error::Input(format!(
            "projection needs more observations ({n}) than nuisance scores ({m})"
        )));
    }
    if candidates.iter().chain(nuisance.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite entries in projection input".into()));
    }
    if m == 0 {
        return Ok(Projection { residuals: candidates.to_owned(), dropped: Vec::new() });
    }
    let (q, _kept, dropped) = pivoted_qr_basis(nuisance, COLLINEARITY_TOL);
    let coef = q.t().dot(&candidates);
    let residuals = &candidates - &q.dot(&coef);
    Ok(Projection { residuals, dropped })
}

/// Local power data: rank `r` and noncentrality `a = τᵀ Ĩ τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSpec {
    pub rank: usize,
    pub noncentrality: f64,
    pub alpha: f64,
}

/// `1 - P(χ²_r(a) ≤ c_r)`, the limiting power of the test and the maximin
/// power bound; zero when `r = 0`.
pub fn asymptotic_power(spec: &PowerSpec) -> Result<f64> {
    if !(spec.alpha > 0.0 && spec.alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {}", spec.alpha)));
    }
    if !(spec.noncentrality >= 0.0) {
        return Err(Error::Domain(format!(
            "noncentrality must be >= 0, got {}",
            spec.noncentrality
        )));
    }
    if spec.rank == 0 {
        return Ok(0.0);
    }
    let c = chi2_quantile(spec.rank, 1.0 - spec.alpha)?;
    Ok(1.0 - noncentral_chi2_cdf(spec.rank, spec.noncentrality, c)?)
}

/// Power envelope for locally unbiased two-sided tests of a scalar
/// parameter with efficient information `info`.
pub fn two_sided_power_bound(info: f64, tau: f64, alpha: f64) -> Result<f64> {
    if !(info >= 0.0) || !info.is_finite() {
        return Err(Error::Domain(format!("information must be finite and >= 0, got {info}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    let shift = info.sqrt() * tau;
    Ok(1.0 - normal_cdf(z - shift) + 1.0 - normal_cdf(z + shift))
}
