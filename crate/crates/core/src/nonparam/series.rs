//! Tensor-product Legendre series regression with leave-one-out and
//! two-fold cross-fitted predictions, plus information-criterion order
//! selection.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::numerics::linalg::{pivoted_qr_basis, spd_solve};

/// Observations with leverage at or above `1 - LEVERAGE_TOL` are rejected.
pub const LEVERAGE_TOL: f64 = 1e-8;

/// Per-dimension affine map of `[lo, hi]` onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl NormalizationBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Input("normalization box bounds must have equal, nonzero length".into()));
        }
        for (j, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return Err(Error::Input(format!(
                    "degenerate normalization box in dimension {j}: [{a}, {b}]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Column-wise sample min/max.
    pub fn from_data(z: ArrayView2<f64>) -> Result<Self> {
        let lo = z.axis_iter(Axis(1)).map(|c| c.fold(f64::INFINITY, |a, &b| a.min(b))).collect();
        let hi = z.axis_iter(Axis(1)).map(|c| c.fold(f64::NEG_INFINITY, |a, &b| a.max(b))).collect();
        Self::new(lo, hi)
    }

    fn map(&self, j: usize, v: f64) -> f64 {
        2.0 * (v - self.lo[j]) / (self.hi[j] - self.lo[j]) - 1.0
    }
}

/// `P₀(t), …, P_k(t)` by the Bonnet recurrence.
pub fn legendre_values(t: f64, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(1.0);
    if k >= 1 {
        out.push(t);
    }
    for m in 1..k {
        let mf = m as f64;
        let next = ((2.0 * mf + 1.0) * t * out[m] - mf * out[m - 1]) / (mf + 1.0);
        out.push(next);
    }
    out
}

/// Number of tensor-product basis functions, `Π (kⱼ + 1)`.
pub fn basis_size(orders: &[usize]) -> usize {
    orders.iter().map(|k| k + 1).product()
}

/// Tensor-product Legendre design matrix. The last dimension varies fastest.
pub fn legendre_design(z: ArrayView2<f64>, orders: &[usize], bx: &NormalizationBox) -> Result<Array2<f64>> {
    let (n, d) = z.dim();
    if orders.len() != d || bx.lo.len() != d {
        return Err(Error::Input(format!(
            "design has {d} columns but {} orders and a {}-dimensional box",
            orders.len(),
            bx.lo.len()
        )));
    }
    let p = basis_size(orders);
    let mut out = Array2::<f64>::zeros((n, p));
    let mut vals: Vec<Vec<f64>> = Vec::with_capacity(d);
    for i in 0..n {
        vals.clear();
        for j in 0..d {
            vals.push(legendre_values(bx.map(j, z[[i, j]]), orders[j]));
        }
        let mut idx = vec![0usize; d];
        for c in 0..p {
            let mut v = 1.0;
            for j in 0..d {
                v *= vals[j][idx[j]];
            }
            out[[i, c]] = v;
            // odometer increment, last dimension fastest
            for j in (0..d).rev() {
                idx[j] += 1;
                if idx[j] <= orders[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
    }
    Ok(out)
}

/// A least-squares series fit.
#[derive(Debug, Clone)]
pub struct SeriesFit {
    pub order_per_dim: Vec<usize>,
    /// `basis_size × response_dim`.
    pub coefficients: Array2<f64>,
    pub input_box: NormalizationBox,
}

impl SeriesFit {
    pub fn fit(z: ArrayView2<f64>, x: ArrayView2<f64>, orders: &[usize]) -> Result<Self> {
        check_shapes(z, x)?;
        let bx = NormalizationBox::from_data(z)?;
        let design = legendre_design(z, orders, &bx)?;
        if design.nrows() <= design.ncols() {
            return Err(Error::Input(format!(
                "{} observations cannot fit {} basis functions",
                design.nrows(),
                design.ncols()
            )));
        }
        let gram = design.t().dot(&design);
        let rhs = design.t().dot(&x);
        let coefficients = spd_solve(gram.view(), rhs.view())?;
        Ok(Self { order_per_dim: orders.to_vec(), coefficients, input_box: bx })
    }

    pub fn predict(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        let design = legendre_design(z, &self.order_per_dim, &self.input_box)?;
        Ok(design.dot(&self.coefficients))
    }
}

/// Out-of-sample predictions, one row per observation.
#[derive(Debug, Clone)]
pub struct LooFits {
    pub values: Array2<f64>,
}

fn check_shapes(z: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<()> {
    if z.nrows() != x.nrows() {
        return Err(Error::Input(format!(
            "regressors have {} rows, responses have {}",
            z.nrows(),
            x.nrows()
        )));
    }
    if z.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite series regression data".into()));
    }
    Ok(())
}

/// Leave-one-out predictions via `(ŷᵢ - hᵢᵢ yᵢ) / (1 - hᵢᵢ)`.
pub fn fit_series_loo(z: ArrayView2<f64>, x: ArrayView2<f64>, orders: &[usize]) -> Result<LooFits> {
    check_shapes(z, x)?;
    let bx = NormalizationBox::from_data(z)?;
    let design = legendre_design(z, orders, &bx)?;
    loo_from_design(design.view(), x)
}

/// Leave-one-out predictions for an arbitrary design matrix.
pub fn loo_from_design(design: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<LooFits> {
    let (n, p) = design.dim();
    if n <= p + 1 {
        return Err(Error::Input(format!(
            "leave-one-out fit needs n > basis size + 1 ({n} <= {})",
            p + 1
        )));
    }
    let (q, _, _) = pivoted_qr_basis(design, 1e-12);
    let coef = q.t().dot(&x);
    let fitted = q.dot(&coef);
    let mut values = Array2::<f64>::zeros(x.dim());
    for i in 0..n {
        let h: f64 = q.row(i).dot(&q.row(i));
        if h >= 1.0 - LEVERAGE_TOL {
            return Err(Error::Leverage { index: i, leverage: h });
        }
        for c in 0..x.ncols() {
            values[[i, c]] = (fitted[[i, c]] - h * x[[i, c]]) / (1.0 - h);
        }
    }
    Ok(LooFits { values })
}

/// Two-fold cross-fitting: observations `0..⌊n/2⌋` are predicted from a fit
/// on the remaining ones and vice versa.
pub fn fit_series_split(z: ArrayView2<f64>, x: ArrayView2<f64>, orders: &[usize]) -> Result<LooFits> {
    check_shapes(z, x)?;
    let n = z.nrows();
    let half = n / 2;
    let p = basis_size(orders);
    if half <= p || n - half <= p {
        return Err(Error::Input(format!(
            "each half ({half} and {}) must exceed the basis size {p}",
            n - half
        )));
    }
    let first = ndarray::s![..half, ..];
    let second = ndarray::s![half.., ..];
    let fit_second = SeriesFit::fit(z.slice(second), x.slice(second), orders)?;
    let fit_first = SeriesFit::fit(z.slice(first), x.slice(first), orders)?;
    let mut values = Array2::<f64>::zeros(x.dim());
    values.slice_mut(first).assign(&fit_second.predict(z.slice(first))?);
    values.slice_mut(second).assign(&fit_first.predict(z.slice(second))?);
    Ok(LooFits { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InformationCriterion {
    Aic,
    Bic,
}

/// `n log(RSS/n) + penalty · basis_size`, summed over response columns.
pub fn information_criterion(
    z: ArrayView2<f64>,
    x: ArrayView2<f64>,
    orders: &[usize],
    criterion: InformationCriterion,
) -> Result<f64> {
    check_shapes(z, x)?;
    let bx = NormalizationBox::from_data(z)?;
    let design = legendre_design(z, orders, &bx)?;
    information_criterion_design(design.view(), x, criterion)
}

/// Information criterion of the least-squares fit of `x` on `design`; the
/// parameter count is the numerical rank of the design.
pub fn information_criterion_design(
    design: ArrayView2<f64>,
    x: ArrayView2<f64>,
    criterion: InformationCriterion,
) -> Result<f64> {
    let n = design.nrows();
    let (q, _, _) = pivoted_qr_basis(design, 1e-12);
    let p = q.ncols();
    if n <= design.ncols() {
        return Err(Error::Input(format!("{} basis functions are infeasible with n = {n}", design.ncols())));
    }
    let resid = &x - &q.dot(&q.t().dot(&x));
    let nf = n as f64;
    let pen = match criterion {
        InformationCriterion::Aic => 2.0,
        InformationCriterion::Bic => nf.ln(),
    };
    let mut total = 0.0;
    for c in resid.axis_iter(Axis(1)) {
        let rss = c.dot(&c).max(f64::MIN_POSITIVE);
        total += nf * (rss / nf).ln() + pen * p as f64;
    }
    Ok(total)
}

/// Minimizes the information criterion over `candidates`; ties go to the
/// candidate with the smaller basis (then the earlier one).
pub fn select_order_ic(
    z: ArrayView2<f64>,
    x: ArrayView2<f64>,
    candidates: &[Vec<usize>],
    criterion: InformationCriterion,
) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::Input("empty candidate set for order selection".into()));
    }
    if candidates.len() == 1 {
        return Ok(candidates[0].clone());
    }
    let mut order: Vec<&Vec<usize>> = candidates.iter().collect();
    order.sort_by_key(|c| basis_size(c));
    let mut best: Option<(f64, &Vec<usize>)> = None;
    for cand in order {
        let score = information_criterion(z, x, cand, criterion)?;
        if best.is_none_or(|(b, _)| score < b) {
            best = Some((score, cand));
        }
    }
    Ok(best.unwrap().1.clone())
}

/// Convenience for one-dimensional responses.
pub fn column(v: ArrayView1<f64>) -> Array2<f64> {
    v.to_owned().insert_axis(Axis(1))
}

pub fn as_column(v: Array1<f64>) -> Array2<f64> {
    v.insert_axis(Axis(1))
}
