//! Penalized cubic smoothing splines.
//!
//! The fit minimizes `Σ (yᵢ - s(xᵢ))² + λ ∫ s''(t)² dt` over cubic splines
//! with breakpoints at empirical quantiles of `x`, represented in a clamped
//! cubic B-spline basis. The smoothing parameter is chosen by generalized
//! cross-validation over a fixed logarithmic grid. For each grid value the
//! criterion is evaluated in `O(p)` through the Demmler–Reinsch
//! diagonalization: with `BᵀB = LLᵀ` and `L⁻¹ΩL⁻ᵀ = U diag(s) Uᵀ`, the
//! shrinkage factors are `1/(1 + λ sₖ)`.

use crate::error::{Error, Result};
use crate::numerics::linalg::{backward_subst_t, cholesky, forward_subst};
use crate::numerics::{sym_eigen, SymmetricMatrix};
use ndarray::Array2;

/// Number of penalties on the GCV grid.
pub const GCV_GRID_SIZE: usize = 40;
/// Grid exponents, relative to `tr(BᵀB)/tr(Ω)`: 10^-8 .. 10^4.
const GCV_LOG10_LO: f64 = -8.0;
const GCV_LOG10_HI: f64 = 4.0;

/// A fitted cubic smoothing spline.
#[derive(Debug, Clone)]
pub struct SplineFit {
    /// Distinct breakpoints, including both boundary knots.
    breakpoints: Vec<f64>,
    /// Clamped knot vector (boundary knots repeated four times).
    knot_vector: Vec<f64>,
    coefficients: Vec<f64>,
    penalty: f64,
    effective_df: f64,
}

impl SplineFit {
    pub fn interior_knots(&self) -> &[f64] {
        &self.breakpoints[1..self.breakpoints.len() - 1]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    /// Trace of the smoother matrix.
    pub fn effective_df(&self) -> f64 {
        self.effective_df
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    fn span_of(&self, v: f64) -> usize {
        // index into the clamped knot vector such that t[span] <= v < t[span + 1]
        let k = self.breakpoints.len();
        let seg = match self.breakpoints.binary_search_by(|b| b.total_cmp(&v)) {
            Ok(i) => i.min(k - 2),
            Err(i) => i.saturating_sub(1).min(k - 2),
        };
        seg + 3
    }

    fn eval_inside(&self, v: f64) -> (f64, f64) {
        let span = self.span_of(v);
        let (b, d1, _) = basis_with_derivs(&self.knot_vector, span, v);
        let mut val = 0.0;
        let mut der = 0.0;
        for r in 0..4 {
            let c = self.coefficients[span - 3 + r];
            val += c * b[r];
            der += c * d1[r];
        }
        (val, der)
    }

    /// Value of the spline; linear extrapolation outside the domain.
    pub fn eval(&self, v: f64) -> f64 {
        let (lo, hi) = self.domain();
        if v < lo {
            let (f, d) = self.eval_inside(lo);
            f + d * (v - lo)
        } else if v > hi {
            let (f, d) = self.eval_inside(hi);
            f + d * (v - hi)
        } else {
            self.eval_inside(v).0
        }
    }

    /// First derivative; constant outside the domain.
    pub fn eval_deriv(&self, v: f64) -> f64 {
        let (lo, hi) = self.domain();
        self.eval_inside(v.clamp(lo, hi)).1
    }

    /// Value and first derivative in one pass.
    pub fn eval_both(&self, v: f64) -> (f64, f64) {
        let (lo, hi) = self.domain();
        let c = v.clamp(lo, hi);
        let (f, d) = self.eval_inside(c);
        (f + d * (v - c), d)
    }
}

pub fn eval_spline(fit: &SplineFit, v: f64) -> f64 {
    fit.eval(v)
}

pub fn eval_spline_deriv(fit: &SplineFit, v: f64) -> f64 {
    fit.eval_deriv(v)
}

/// Cubic B-spline basis values and first/second derivatives at `x` for the
/// four functions that are nonzero on knot span `span`.
fn basis_with_derivs(t: &[f64], span: usize, x: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    // Cox–de Boor triangle, storing the degree-2 and degree-1 stages for derivatives.
    let mut left = [0.0; 4];
    let mut right = [0.0; 4];
    let mut ndu = [[0.0f64; 4]; 4];
    ndu[0][0] = 1.0;
    for j in 1..=3 {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut vals = [0.0; 4];
    for r in 0..4 {
        vals[r] = ndu[r][3];
    }
    // derivatives (NURBS book A2.3) up to order 2
    let mut ders = [[0.0f64; 4]; 3];
    ders[0] = vals;
    for r in 0..=3usize {
        let mut a = [[0.0f64; 4]; 2];
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=2usize {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = 3 - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { 3 - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut d1 = ders[1];
    let mut d2 = ders[2];
    for r in 0..4 {
        d1[r] *= 3.0;
        d2[r] *= 6.0;
    }
    (vals, d1, d2)
}

/// Type-7 empirical quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Precomputed pieces of the penalized least-squares problem.
struct SplineSystem {
    breakpoints: Vec<f64>,
    knot_vector: Vec<f64>,
    chol: Array2<f64>,
    /// Columns are the Demmler–Reinsch directions `Uₖ`.
    rotation: Array2<f64>,
    spectrum: Vec<f64>,
    /// `Uᵀ L⁻¹ Bᵀ y`.
    rotated_rhs: Vec<f64>,
    /// Residual sum of squares of the unpenalized fit.
    rss_unpenalized: f64,
    n: usize,
    /// `tr(BᵀB) / tr(Ω)`, the scale of the penalty grid.
    penalty_scale: f64,
}

impl SplineSystem {
    fn build(x: &[f64], y: &[f64], n_knots: usize) -> Result<Self> {
        let n = x.len();
        if y.len() != n {
            return Err(Error::Input(format!("x has length {n}, y has length {}", y.len())));
        }
        if n_knots < 2 {
            return Err(Error::Input("a smoothing spline needs at least 2 knots".into()));
        }
        if n < n_knots + 4 {
            return Err(Error::Input(format!(
                "{n} observations are too few for {n_knots} knots (need {})",
                n_knots + 4
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite spline data".into()));
        }
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() < n_knots {
            return Err(Error::Input(format!(
                "only {} distinct x values for {n_knots} knots",
                sorted.len()
            )));
        }
        let mut breakpoints: Vec<f64> = (0..n_knots)
            .map(|k| quantile_sorted(&sorted, k as f64 / (n_knots - 1) as f64))
            .collect();
        breakpoints.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        if breakpoints.len() < 2 {
            return Err(Error::Input("degenerate x range".into()));
        }
        let k = breakpoints.len();
        let mut knot_vector = Vec::with_capacity(k + 6);
        knot_vector.extend([breakpoints[0]; 3]);
        knot_vector.extend_from_slice(&breakpoints);
        knot_vector.extend([breakpoints[k - 1]; 3]);
        let p = k + 2;

        let mut gram = Array2::<f64>::zeros((p, p));
        let mut rhs = vec![0.0; p];
        let mut yty = 0.0;
        for (&xi, &yi) in x.iter().zip(y.iter()) {
            let seg = match breakpoints.binary_search_by(|b| b.total_cmp(&xi)) {
                Ok(i) => i.min(k - 2),
                Err(i) => i.saturating_sub(1).min(k - 2),
            };
            let span = seg + 3;
            let (b, _, _) = basis_with_derivs(&knot_vector, span, xi);
            let off = span - 3;
            for r in 0..4 {
                rhs[off + r] += b[r] * yi;
                for c in r..4 {
                    gram[[off + r, off + c]] += b[r] * b[c];
                }
            }
            yty += yi * yi;
        }
        for r in 0..p {
            for c in 0..r {
                gram[[r, c]] = gram[[c, r]];
            }
        }

        // Roughness penalty: B'' is linear on each segment, so Simpson is exact.
        let mut omega = Array2::<f64>::zeros((p, p));
        for seg in 0..k - 1 {
            let a = breakpoints[seg];
            let b = breakpoints[seg + 1];
            let h = b - a;
            let span = seg + 3;
            let (_, _, da) = basis_with_derivs(&knot_vector, span, a);
            let (_, _, dm) = basis_with_derivs(&knot_vector, span, 0.5 * (a + b));
            let (_, _, db) = basis_with_derivs(&knot_vector, span, b);
            let off = span - 3;
            for r in 0..4 {
                for c in 0..4 {
                    omega[[off + r, off + c]] +=
                        h / 6.0 * (da[r] * da[c] + 4.0 * dm[r] * dm[c] + db[r] * db[c]);
                }
            }
        }

        let chol = cholesky(gram.view()).map_err(|e| {
            Error::Conditioning(format!("spline normal equations are singular: {e}"))
        })?;
        // M = L⁻¹ Ω L⁻ᵀ
        let mut tmp = Array2::<f64>::zeros((p, p));
        for c in 0..p {
            let mut col: Vec<f64> = omega.column(c).to_vec();
            forward_subst(chol.view(), &mut col);
            for r in 0..p {
                tmp[[r, c]] = col[r];
            }
        }
        let mut m = Array2::<f64>::zeros((p, p));
        for r in 0..p {
            let mut row: Vec<f64> = tmp.row(r).to_vec();
            forward_subst(chol.view(), &mut row);
            for c in 0..p {
                m[[r, c]] = row[c];
            }
        }
        let eig = sym_eigen(&SymmetricMatrix::new(m)?)?;
        // the two linear functions span the null space; clean rounding noise there
        let s_max = eig.eigenvalues[0].max(0.0);
        let spectrum: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|&s| if s > 1e-11 * s_max { s } else { 0.0 })
            .collect();
        let mut lb = rhs.clone();
        forward_subst(chol.view(), &mut lb);
        let rotated_rhs: Vec<f64> = (0..p).map(|k| eig.eigenvectors.column(k).iter().zip(&lb).map(|(u, v)| u * v).sum()).collect();
        let explained: f64 = rotated_rhs.iter().map(|w| w * w).sum();
        let rss_unpenalized = (yty - explained).max(0.0);
        let tr_omega: f64 = omega.diag().sum();
        let penalty_scale = if tr_omega > 0.0 { gram.diag().sum() / tr_omega } else { 1.0 };

        Ok(Self {
            breakpoints,
            knot_vector,
            chol,
            rotation: eig.eigenvectors,
            spectrum,
            rotated_rhs,
            rss_unpenalized,
            n,
            penalty_scale,
        })
    }

    /// (rss, df) at penalty `lambda`.
    fn criterion_parts(&self, lambda: f64) -> (f64, f64) {
        let mut rss = self.rss_unpenalized;
        let mut df = 0.0;
        for (s, w) in self.spectrum.iter().zip(&self.rotated_rhs) {
            let shrink = 1.0 / (1.0 + lambda * s);
            df += shrink;
            rss += (1.0 - shrink).powi(2) * w * w;
        }
        (rss, df)
    }

    fn gcv(&self, lambda: f64) -> f64 {
        let (rss, df) = self.criterion_parts(lambda);
        let n = self.n as f64;
        let denom = 1.0 - df / n;
        (rss / n) / (denom * denom)
    }

    fn finish(self, lambda: f64) -> SplineFit {
        let p = self.spectrum.len();
        let mut z = vec![0.0; p];
        for k in 0..p {
            let shrink = 1.0 / (1.0 + lambda * self.spectrum[k]);
            let wk = shrink * self.rotated_rhs[k];
            for r in 0..p {
                z[r] += self.rotation[[r, k]] * wk;
            }
        }
        backward_subst_t(self.chol.view(), &mut z);
        let (_, df) = self.criterion_parts(lambda);
        SplineFit {
            breakpoints: self.breakpoints,
            knot_vector: self.knot_vector,
            coefficients: z,
            penalty: lambda,
            effective_df: df,
        }
    }
}

/// The penalties searched by GCV, as multiples of `tr(BᵀB)/tr(Ω)`.
pub fn gcv_grid() -> Vec<f64> {
    (0..GCV_GRID_SIZE)
        .map(|i| {
            let e = GCV_LOG10_LO + (GCV_LOG10_HI - GCV_LOG10_LO) * i as f64 / (GCV_GRID_SIZE - 1) as f64;
            10f64.powf(e)
        })
        .collect()
}

/// Smoothing spline with the penalty chosen by GCV.
///
/// `n_knots` counts all breakpoints including the two boundary knots, so the
/// basis has `n_knots + 2` functions when the quantiles are distinct.
pub fn fit_smoothing_spline(x: &[f64], y: &[f64], n_knots: usize) -> Result<SplineFit> {
    let sys = SplineSystem::build(x, y, n_knots)?;
    let mut best = (f64::INFINITY, 0.0);
    for ratio in gcv_grid() {
        let lambda = ratio * sys.penalty_scale;
        let score = sys.gcv(lambda);
        // strict < keeps the smallest penalty on ties
        if score < best.0 {
            best = (score, lambda);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Conditioning("GCV criterion is not finite on the grid".into()));
    }
    Ok(sys.finish(best.1))
}

/// Smoothing spline with a fixed absolute penalty `lambda`.
pub fn fit_smoothing_spline_with_penalty(
    x: &[f64],
    y: &[f64],
    n_knots: usize,
    lambda: f64,
) -> Result<SplineFit> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("penalty must be >= 0, got {lambda}")));
    }
    let sys = SplineSystem::build(x, y, n_knots)?;
    Ok(sys.finish(lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn basis_partition_of_unity() {
        let x = grid(60, -2.0, 3.0);
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let fit = fit_smoothing_spline(&x, &y, 8).unwrap();
        for v in grid(37, -2.0, 3.0) {
            let span = fit.span_of(v);
            let (b, d1, _) = basis_with_derivs(&fit.knot_vector, span, v);
            assert_abs_diff_eq!(b.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
            assert_abs_diff_eq!(d1.iter().sum::<f64>(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn linear_data_reproduced_for_any_penalty() {
        let x = grid(80, 0.0, 4.0);
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.7 * v).collect();
        for lambda in [0.0, 1e-3, 1.0, 1e6] {
            let fit = fit_smoothing_spline_with_penalty(&x, &y, 20, lambda).unwrap();
            for (xi, yi) in x.iter().zip(&y) {
                assert_abs_diff_eq!(fit.eval(*xi), *yi, epsilon = 1e-6);
            }
        }
        let fit = fit_smoothing_spline(&x, &y, 20).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_abs_diff_eq!(fit.eval(*xi), *yi, epsilon = 1e-6);
        }
    }

    #[test]
    fn huge_penalty_gives_least_squares_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..2.0)).collect();
        let y: Vec<f64> = x.iter().map(|v: &f64| (3.0 * v).sin() + rng.random_range(-0.2..0.2)).collect();
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        let slope = sxy / sxx;
        let fit = fit_smoothing_spline_with_penalty(&x, &y, 20, 1e18).unwrap();
        for v in [-0.5, 0.0, 1.0, 1.7] {
            assert_abs_diff_eq!(fit.eval(v), my + slope * (v - mx), epsilon = 1e-5);
        }
    }

    #[test]
    fn sine_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = rand_distr::Normal::new(0.0, 0.1).unwrap();
        let x: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..6.0)).collect();
        let y: Vec<f64> = x.iter().map(|v: &f64| v.sin() + rng.sample(normal)).collect();
        let fit = fit_smoothing_spline(&x, &y, 20).unwrap();
        // integrated squared error on [min x, max x] by the midpoint rule
        let (lo, hi) = fit.domain();
        let m = 2000;
        let h = (hi - lo) / m as f64;
        let ise: f64 = (0..m)
            .map(|i| {
                let v = lo + (i as f64 + 0.5) * h;
                (fit.eval(v) - v.sin()).powi(2) * h
            })
            .sum();
        assert!(ise < 0.01, "ISE {ise}");
        assert!(fit.effective_df() > 3.0 && fit.effective_df() < 22.0);
    }

    #[test]
    fn constant_fit_has_zero_derivative() {
        let x = grid(50, -1.0, 1.0);
        let y = vec![3.5; 50];
        let fit = fit_smoothing_spline(&x, &y, 10).unwrap();
        for v in [-3.0, -1.0, 0.2, 0.9, 4.0] {
            assert_abs_diff_eq!(fit.eval_deriv(v), 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(fit.eval(v), 3.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn cubic_data_derivative_exact() {
        let x = grid(120, -1.0, 2.0);
        let f = |v: f64| 0.5 * v * v * v - v * v + 0.3 * v + 1.0;
        let df = |v: f64| 1.5 * v * v - 2.0 * v + 0.3;
        let y: Vec<f64> = x.iter().map(|v| f(*v)).collect();
        let fit = fit_smoothing_spline_with_penalty(&x, &y, 20, 0.0).unwrap();
        for v in grid(31, -0.9, 1.9) {
            assert_abs_diff_eq!(fit.eval_deriv(v), df(v), epsilon = 1e-6);
        }
        let fit = fit_smoothing_spline(&x, &y, 20).unwrap();
        for v in grid(31, -0.9, 1.9) {
            assert_abs_diff_eq!(fit.eval_deriv(v), df(v), epsilon = 1e-6);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x.iter().map(|v: &f64| (2.0 * v).cos() * 5.0 + rng.random_range(-1.0..1.0)).collect();
        let fit = fit_smoothing_spline(&x, &y, 20).unwrap();
        let h = 1e-5;
        for _ in 0..100 {
            let v: f64 = rng.random_range(-1.9..1.9);
            let fd = (fit.eval(v + h) - fit.eval(v - h)) / (2.0 * h);
            assert_abs_diff_eq!(fit.eval_deriv(v), fd, epsilon = 1e-5);
        }
    }

    #[test]
    fn adding_a_line_shifts_fit_by_the_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..150).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v: &f64| (6.0 * v).sin() + rng.random_range(-0.3..0.3)).collect();
        let y2: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b + 4.0 - 2.5 * a).collect();
        let lambda = 1e-4;
        let f1 = fit_smoothing_spline_with_penalty(&x, &y, 20, lambda).unwrap();
        let f2 = fit_smoothing_spline_with_penalty(&x, &y2, 20, lambda).unwrap();
        for xi in &x {
            assert_abs_diff_eq!(f2.eval(*xi) - f1.eval(*xi), 4.0 - 2.5 * xi, epsilon = 1e-8);
        }
    }

    #[test]
    fn linear_extrapolation_outside_domain() {
        let x = grid(40, 0.0, 1.0);
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let fit = fit_smoothing_spline(&x, &y, 10).unwrap();
        let (f1, d1) = (fit.eval(1.0), fit.eval_deriv(1.0));
        assert_abs_diff_eq!(fit.eval(1.5), f1 + 0.5 * d1, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.eval_deriv(7.0), d1, epsilon = 1e-12);
    }

    #[test]
    fn input_errors() {
        let x = vec![1.0; 40];
        let y = vec![0.0; 40];
        assert!(matches!(fit_smoothing_spline(&x, &y, 20), Err(Error::Input(_))));
        assert!(fit_smoothing_spline(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0], 20).is_err());
        assert!(fit_smoothing_spline(&grid(30, 0.0, 1.0), &[0.0; 29], 5).is_err());
    }
}
