//! Dense symmetric linear algebra: eigendecomposition, the eigenvalue
//! thresholded pseudo-inverse, Cholesky and Householder QR helpers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// A finite, exactly symmetric square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(Array2<f64>);

impl SymmetricMatrix {
    /// Symmetrizes `(m + mᵀ)/2`; rejects non-square or non-finite input.
    pub fn new(m: Array2<f64>) -> Result<Self> {
        let (r, c) = m.dim();
        if r != c || r == 0 {
            return Err(Error::Input(format!("expected a non-empty square matrix, got {r}x{c}")));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("matrix has non-finite entries".into()));
        }
        let mut out = m;
        for i in 0..r {
            for j in (i + 1)..r {
                let s = 0.5 * (out[[i, j]] + out[[j, i]]);
                out[[i, j]] = s;
                out[[j, i]] = s;
            }
        }
        Ok(Self(out))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(Array2::zeros((dim, dim)))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Array2::eye(dim))
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        Self::new(Array2::from_diag(&Array1::from(diag.to_vec())))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    /// Quadratic form `vᵀ M v`.
    pub fn quad_form(&self, v: ArrayView1<f64>) -> f64 {
        v.dot(&self.0.dot(&v))
    }
}

/// Spectral decomposition `M = Q diag(λ) Qᵀ` with eigenvalues descending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Array1<f64>,
    /// Eigenvectors are the columns.
    pub eigenvectors: Array2<f64>,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.eigenvectors * &self.eigenvalues.view().insert_axis(Axis(0));
        scaled.dot(&self.eigenvectors.t())
    }
}

/// Full eigendecomposition of a symmetric matrix via Householder
/// tridiagonalization followed by the implicit QL algorithm.
pub fn sym_eigen(m: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let n = m.dim();
    let mut v = m.as_array().clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;

    // tql2 leaves eigenvalues ascending.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| d[i]));
    let mut eigenvectors = Array2::zeros((n, n));
    for (k, &i) in order.iter().enumerate() {
        eigenvectors.column_mut(k).assign(&v.column(i));
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

// Householder reduction to tridiagonal form (EISPACK tred2 as in JAMA).
fn tridiagonalize(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
                v[[j, i]] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in (j + 1)..i {
                    g += v[[k, j]] * d[k];
                    e[k] += v[[k, j]] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[[k, j]] -= f * e[k] + g * d[k];
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    v[[k, j]] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = 0.0;
    }
    v[[n - 1, n - 1]] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal matrix, accumulating transformations.
fn tql2(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 200 {
                    return Err(Error::Conditioning("eigen iteration did not converge".into()));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in (l + 2)..n {
                    d[i] -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[[k, i + 1]];
                        v[[k, i + 1]] = s * v[[k, i]] + c * h;
                        v[[k, i]] = c * v[[k, i]] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Pseudo-inverse after zeroing every eigenvalue `<= threshold`.
#[derive(Debug, Clone)]
pub struct RegularizedInverse {
    pub pseudo_inverse: SymmetricMatrix,
    pub rank: usize,
    pub threshold: f64,
    /// Retained eigenvalues of the input (not of the inverse), descending.
    pub kept_eigenvalues: Vec<f64>,
}

/// Inverts eigenvalues strictly above `threshold` and zeroes the rest.
pub fn threshold_pinv(m: &SymmetricMatrix, threshold: f64) -> Result<RegularizedInverse> {
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return Err(Error::Domain(format!("threshold must be finite and >= 0, got {threshold}")));
    }
    let eig = sym_eigen(m)?;
    Ok(pinv_from_eigen(&eig, threshold))
}

pub(crate) fn pinv_from_eigen(eig: &EigenDecomposition, threshold: f64) -> RegularizedInverse {
    let n = eig.eigenvalues.len();
    let mut inv = Array2::zeros((n, n));
    let mut kept = Vec::new();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        // threshold = 0 still requires a strictly positive eigenvalue
        if lambda > threshold && lambda > 0.0 {
            kept.push(lambda);
            let q = eig.eigenvectors.column(k);
            for i in 0..n {
                let qi = q[i] / lambda;
                for j in 0..n {
                    inv[[i, j]] += qi * q[j];
                }
            }
        }
    }
    RegularizedInverse {
        // symmetrization of an exactly-symmetric accumulation is a no-op except for rounding
        pseudo_inverse: SymmetricMatrix::new(inv).expect("finite pseudo-inverse"),
        rank: kept.len(),
        threshold,
        kept_eigenvalues: kept,
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut s = a[[j, j]];
        for k in 0..j {
            s -= l[[j, k]] * l[[j, k]];
        }
        if !(s > 0.0) {
            return Err(Error::Conditioning(format!(
                "matrix is not positive definite (pivot {j} = {s:e})"
            )));
        }
        let d = s.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub fn forward_subst(l: ArrayView2<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * b[k];
        }
        b[i] = s / l[[i, i]];
    }
}

/// Solves `Lᵀ x = b` in place for lower-triangular `L`.
pub fn backward_subst_t(l: ArrayView2<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * b[k];
        }
        b[i] = s / l[[i, i]];
    }
}

/// Solves `A X = B` for symmetric positive definite `A` (columns of `B`).
pub fn spd_solve(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    let l = cholesky(a)?;
    let mut out = b.to_owned();
    for mut col in out.columns_mut() {
        let mut v = col.to_vec();
        forward_subst(l.view(), &mut v);
        backward_subst_t(l.view(), &mut v);
        col.assign(&Array1::from(v));
    }
    Ok(out)
}

/// Householder QR with column pivoting.
///
/// Columns whose pivot magnitude falls below `rel_tol · |R₁₁|` are treated as
/// linearly dependent. Returns an orthonormal basis of the retained span
/// (`n × rank`), the retained column indices and the dropped ones.
pub fn pivoted_qr_basis(a: ArrayView2<f64>, rel_tol: f64) -> (Array2<f64>, Vec<usize>, Vec<usize>) {
    let (n, m) = a.dim();
    let mut r = a.to_owned();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut norms: Vec<f64> = (0..m).map(|j| r.column(j).dot(&r.column(j))).collect();
    let mut reflectors: Vec<Array1<f64>> = Vec::new();
    let mut rank = 0;
    let mut first_pivot = 0.0;
    let steps = n.min(m);
    for k in 0..steps {
        // pivot on the largest remaining column norm (recomputed for stability)
        for j in k..m {
            norms[j] = r.slice(ndarray::s![k.., j]).dot(&r.slice(ndarray::s![k.., j]));
        }
        let (p, _) = (k..m)
            .map(|j| (j, norms[j]))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if p != k {
            for i in 0..n {
                r.swap([i, k], [i, p]);
            }
            perm.swap(k, p);
            norms.swap(k, p);
        }
        let x = r.slice(ndarray::s![k.., k]).to_owned();
        let alpha = x.dot(&x).sqrt();
        if k == 0 {
            first_pivot = alpha;
        }
        if alpha <= rel_tol * first_pivot || alpha == 0.0 {
            break;
        }
        let mut v = x;
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vnorm2 = v.dot(&v);
        if vnorm2 > 0.0 {
            for j in k..m {
                let col = r.slice(ndarray::s![k.., j]);
                let f = 2.0 * v.dot(&col) / vnorm2;
                let mut colm = r.slice_mut(ndarray::s![k.., j]);
                colm.scaled_add(-f, &v);
            }
        }
        reflectors.push(v);
        rank += 1;
    }
    // Q = H_1 ... H_rank applied to the first `rank` unit vectors
    let mut q = Array2::<f64>::zeros((n, rank));
    for j in 0..rank {
        q[[j, j]] = 1.0;
    }
    for (k, v) in reflectors.iter().enumerate().rev() {
        let vnorm2 = v.dot(v);
        if vnorm2 == 0.0 {
            continue;
        }
        for j in 0..rank {
            let f = 2.0 * v.dot(&q.slice(ndarray::s![k.., j])) / vnorm2;
            q.slice_mut(ndarray::s![k.., j]).scaled_add(-f, v);
        }
    }
    let kept = perm[..rank].to_vec();
    let mut dropped = perm[rank..].to_vec();
    dropped.sort_unstable();
    (q, kept, dropped)
}
