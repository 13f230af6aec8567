//! Moment functions for the single-index model and the ψ test built on them.
//!
//! At the hypothesized value θ₀ the index is `V = X₁ + X₂θ₀` and the moment
//! (with unit weight) is
//!
//! ```text
//! g(W) = (Y - f(V)) f'(V) (X₂ - E[X₂ | V]).
//! ```
//!
//! The feasible version replaces `f`, `f'` and `E[X₂|V]` by smoothing
//! splines cross-fitted on the opposite half of the sample.

use ndarray::Array2;

use super::design::{link_deriv, link_eval, simulate_sim_with_errors, ErrorKind, LinkFamily, SimData, SimDesign};
use crate::engine::{c_alpha_test, MomentSample, TestConfig, TestResult};
use crate::error::{Error, Result};
use crate::mc::rng_for;
use crate::nonparam::{fit_smoothing_spline, SplineFit};

/// Knots for every spline fitted by the single-index backend.
pub const SIM_SPLINE_KNOTS: usize = 20;
/// Truncation level ν for the single-index ψ test.
pub const SIM_THRESHOLD: f64 = 1e-3;

/// Population quantities needed by the oracle moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimTruth {
    pub family: LinkFamily,
    pub c: f64,
}

impl SimTruth {
    pub fn for_design(design: &SimDesign) -> Self {
        Self { family: design.link_family, c: design.c() }
    }

    /// Flat link used to exercise the unidentified case.
    pub fn flat() -> Self {
        // exp(-v²/2c²) with c = ∞ is constant; a huge c makes f' vanish to rounding
        Self { family: LinkFamily::Exponential, c: f64::INFINITY }
    }

    pub fn f(&self, v: f64) -> f64 {
        if self.c.is_infinite() {
            return 5.0;
        }
        link_eval(self.family, self.c, v)
    }

    pub fn f_prime(&self, v: f64) -> f64 {
        if self.c.is_infinite() {
            return 0.0;
        }
        link_deriv(self.family, self.c, v)
    }
}

/// `E[X₂ | X₁ + X₂θ = v]` under the simulation covariate law.
///
/// With `X₁ = Z₁`, `X₂ = 0.2Z₁ + 0.4Z₂ + 0.8` and `(Z₁, Z₂)` uniform on the
/// square, the conditioning set is a line segment on which `(Z₁, Z₂)` is
/// uniform, so the conditional mean is `X₂` at the segment midpoint.
pub fn conditional_x2_mean(theta: f64, v: f64) -> f64 {
    let a = 1.0 + 0.2 * theta;
    let b = 0.4 * theta;
    let c = v - 0.8 * theta;
    let (z1, z2) = segment_midpoint(a, b, c);
    0.2 * z1 + 0.4 * z2 + 0.8
}

// Midpoint of {a z₁ + b z₂ = c} ∩ [-1, 1]²; clamps to the nearest feasible
// point when v lies outside the support.
fn segment_midpoint(a: f64, b: f64, c: f64) -> (f64, f64) {
    // parametrize by the coordinate with the smaller coefficient
    let swap = a.abs() > b.abs();
    let (free_coef, dep_coef) = if swap { (b, a) } else { (a, b) };
    let t = if free_coef == 0.0 {
        0.0
    } else {
        let r1 = (c - dep_coef.abs()) / free_coef;
        let r2 = (c + dep_coef.abs()) / free_coef;
        let (r_lo, r_hi) = (r1.min(r2), r1.max(r2));
        if r_lo > 1.0 {
            1.0
        } else if r_hi < -1.0 {
            -1.0
        } else {
            0.5 * (r_lo.max(-1.0) + r_hi.min(1.0))
        }
    };
    let dep = ((c - free_coef * t) / dep_coef).clamp(-1.0, 1.0);
    if swap {
        (dep, t)
    } else {
        (t, dep)
    }
}

/// Moments with the true `f`, `f'` and conditional mean.
pub fn oracle_moment(data: &SimData, theta0: f64, truth: &SimTruth) -> Result<MomentSample> {
    let n = data.n();
    let mut rows = Array2::zeros((n, 1));
    for i in 0..n {
        let v = data.x1[i] + data.x2[i] * theta0;
        rows[[i, 0]] = (data.y[i] - truth.f(v)) * truth.f_prime(v) * (data.x2[i] - conditional_x2_mean(theta0, v));
    }
    MomentSample::new(rows)
}

/// Cross-fitted nuisance estimates at a given index.
pub(crate) struct CrossFit {
    pub f: Vec<f64>,
    pub f_prime: Vec<f64>,
    pub x2_mean: Vec<f64>,
}

fn fit_half(v: &[f64], y: &[f64], range: std::ops::Range<usize>, what: &str) -> Result<SplineFit> {
    fit_smoothing_spline(&v[range.clone()], &y[range.clone()], SIM_SPLINE_KNOTS).map_err(|e| {
        Error::Conditioning(format!(
            "spline for {what} on observations {}..{} failed: {e}",
            range.start, range.end
        ))
    })
}

/// Splits at `⌊n/2⌋`: each half is evaluated with fits from the other half.
pub(crate) fn cross_fit(data: &SimData, v: &[f64], with_x2: bool) -> Result<CrossFit> {
    let n = data.n();
    let half = n / 2;
    let first = 0..half;
    let second = half..n;
    let mut out = CrossFit { f: vec![0.0; n], f_prime: vec![0.0; n], x2_mean: vec![0.0; n] };
    for (train, eval) in [(second.clone(), first.clone()), (first, second)] {
        let f_fit = fit_half(v, &data.y, train.clone(), "E[Y|V]")?;
        let z_fit = if with_x2 { Some(fit_half(v, &data.x2, train, "E[X2|V]")?) } else { None };
        for i in eval {
            let (f, d) = f_fit.eval_both(v[i]);
            out.f[i] = f;
            out.f_prime[i] = d;
            if let Some(z) = &z_fit {
                out.x2_mean[i] = z.eval(v[i]);
            }
        }
    }
    Ok(out)
}

/// Minimum sample size for the cross-fitted 20-knot splines.
pub const SIM_MIN_N: usize = 100;

/// Plug-in moments with half-sample cross-fitted splines (ω ≡ 1).
pub fn feasible_moment(data: &SimData, theta0: f64) -> Result<MomentSample> {
    let n = data.n();
    if n < SIM_MIN_N {
        return Err(Error::Input(format!("single-index moments need n >= {SIM_MIN_N}, got {n}")));
    }
    let v = data.index(theta0);
    let cf = cross_fit(data, &v, true)?;
    let mut rows = Array2::zeros((n, 1));
    for i in 0..n {
        rows[[i, 0]] = (data.y[i] - cf.f[i]) * cf.f_prime[i] * (data.x2[i] - cf.x2_mean[i]);
    }
    MomentSample::new(rows)
}

/// The ψ test on the feasible single-index moments.
pub fn psi_test_sim(data: &SimData, theta0: f64, alpha: f64, threshold: f64) -> Result<TestResult> {
    let ms = feasible_moment(data, theta0)?;
    c_alpha_test(&ms, &TestConfig::thresholded(alpha, threshold))
}

/// Score of the error density in ε, `∂/∂ε log p(ε | X)`.
pub fn error_score(kind: ErrorKind, eps: f64, x1: f64) -> f64 {
    match kind {
        // scaled t(6): p(e) ∝ (1 + 1.5e²/6)^(-7/2)
        ErrorKind::HomoskedasticT6 => -1.75 * eps / (1.0 + 0.25 * eps * eps),
        ErrorKind::HeteroskedasticNormal => -eps / (1.0 + x1.sin().powi(2)),
    }
}

/// Monte Carlo estimates of the local-power quantities `Σ₂₁ = E[g ℓ̇]` and
/// `V = E[g²]` at θ₀ (1 × 1 since K = 1).
#[derive(Debug, Clone)]
pub struct LocalPowerParams {
    pub sigma21: Array2<f64>,
    pub v: Array2<f64>,
    pub sigma21_se: f64,
    pub v_se: f64,
}

impl LocalPowerParams {
    /// `τ² Σ₂₁² / V` (the scalar form of `τ'Σ₂₁'V†Σ₂₁τ`); zero when `V = 0`.
    pub fn noncentrality(&self, tau: f64) -> f64 {
        let v = self.v[[0, 0]];
        if v <= 0.0 {
            return 0.0;
        }
        let s = self.sigma21[[0, 0]];
        tau * tau * s * s / v
    }
}

/// Draws `mc_reps` observations at θ = θ₀ and averages `g·ℓ̇` and `g²`, where
/// `ℓ̇ = -φ(ε, X) f'(V) X₂` is the score for θ.
pub fn local_power_params(design: &SimDesign, theta0: f64, mc_reps: usize, seed: u64) -> Result<LocalPowerParams> {
    if mc_reps < 2 {
        return Err(Error::Input("local power Monte Carlo needs at least 2 draws".into()));
    }
    let truth = SimTruth::for_design(design);
    local_power_params_with(design, &truth, theta0, mc_reps, seed)
}

pub(crate) fn local_power_params_with(
    design: &SimDesign,
    truth: &SimTruth,
    theta0: f64,
    mc_reps: usize,
    seed: u64,
) -> Result<LocalPowerParams> {
    let d = design.with_theta(theta0).with_n(mc_reps);
    let mut rng = rng_for(seed, 0, 0x10ca1);
    let (data, eps) = simulate_sim_with_errors(&d, &mut rng);
    let (mut s_sum, mut s_sq, mut v_sum, mut v_sq) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..mc_reps {
        let v = data.x1[i] + data.x2[i] * theta0;
        let fp = truth.f_prime(v);
        let g = eps[i] * fp * (data.x2[i] - conditional_x2_mean(theta0, v));
        let score = -error_score(design.error_kind, eps[i], data.x1[i]) * fp * data.x2[i];
        let a = g * score;
        let b = g * g;
        s_sum += a;
        s_sq += a * a;
        v_sum += b;
        v_sq += b * b;
    }
    let m = mc_reps as f64;
    let (s_mean, v_mean) = (s_sum / m, v_sum / m);
    let se = |sum_sq: f64, mean: f64| ((sum_sq / m - mean * mean).max(0.0) / (m - 1.0)).sqrt();
    Ok(LocalPowerParams {
        sigma21: Array2::from_elem((1, 1), s_mean),
        v: Array2::from_elem((1, 1), v_mean),
        sigma21_se: se(s_sq, s_mean),
        v_se: se(v_sq, v_mean),
    })
}
