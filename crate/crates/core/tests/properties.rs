use calpha_core::engine::{
    asymptotic_power, c_alpha_test, project_out, MomentSample, PowerSpec, TestConfig,
};
use calpha_core::mc::replicate;
use calpha_core::nonparam::loo_from_design;
use calpha_core::numerics::linalg::spd_solve;
use calpha_core::numerics::{
    chi2_cdf, chi2_quantile, normal_cdf, normal_quantile, threshold_pinv, SymmetricMatrix,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

// Gram-Schmidt on a Gaussian matrix
fn orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q = gaussian(d, d, rng);
    for j in 0..d {
        for k in 0..j {
            let proj = q.column(j).dot(&q.column(k));
            let ck = q.column(k).to_owned();
            q.column_mut(j).scaled_add(-proj, &ck);
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    q
}

/// Symmetric PSD matrix with the given eigenvalues in a random basis.
fn with_spectrum(eigs: &[f64], rng: &mut ChaCha8Rng) -> (SymmetricMatrix, Array2<f64>) {
    let q = orthogonal(eigs.len(), rng);
    let lam = Array2::from_diag(&Array1::from(eigs.to_vec()));
    (SymmetricMatrix::new(q.dot(&lam).dot(&q.t())).unwrap(), q)
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.1f64..10.0], 1..7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pinv_satisfies_moore_penrose(eigs in spectrum(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, _) = with_spectrum(&eigs, &mut rng);
        let inv = threshold_pinv(&a, 1e-6).unwrap();
        let (a, p) = (a.as_array(), inv.pseudo_inverse.as_array());
        prop_assert_eq!(inv.rank, eigs.iter().filter(|&&l| l > 0.0).count());
        prop_assert!(max_abs_diff(&a.dot(p).dot(a), a) < 1e-8);
        prop_assert!(max_abs_diff(&p.dot(a).dot(p), p) < 1e-8);
        let ap = a.dot(p);
        prop_assert!(max_abs_diff(&ap, &ap.t().to_owned()) < 1e-8);
        let pa = p.dot(a);
        prop_assert!(max_abs_diff(&pa, &pa.t().to_owned()) < 1e-8);
    }

    #[test]
    fn pinv_commutes_with_rotation(eigs in spectrum(), nu in 0.0f64..5.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, _) = with_spectrum(&eigs, &mut rng);
        // keep eigenvalues away from the cut so the retained set is stable
        prop_assume!(eigs.iter().all(|l| (l - nu).abs() > 1e-6));
        let r = orthogonal(eigs.len(), &mut rng);
        let rotated = SymmetricMatrix::new(r.dot(a.as_array()).dot(&r.t())).unwrap();
        let lhs = threshold_pinv(&rotated, nu).unwrap();
        let rhs = r.dot(threshold_pinv(&a, nu).unwrap().pseudo_inverse.as_array()).dot(&r.t());
        prop_assert!(max_abs_diff(lhs.pseudo_inverse.as_array(), &rhs) < 1e-8);
    }

    #[test]
    fn rank_falls_as_threshold_rises(eigs in spectrum(), nu in 0.0f64..10.0, step in 0.0f64..5.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, _) = with_spectrum(&eigs, &mut rng);
        let lo = threshold_pinv(&a, nu).unwrap().rank;
        let hi = threshold_pinv(&a, nu + step).unwrap().rank;
        prop_assert!(hi <= lo);
    }

    #[test]
    fn full_rank_statistic_is_invariant_to_transforms(d in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gaussian(80, d, &mut rng) + 0.2;
        // well-conditioned invertible map
        let t = orthogonal(d, &mut rng).dot(&Array2::from_diag(&Array1::from_shape_fn(d, |k| 0.5 + k as f64)));
        let cfg = TestConfig::full_rank(0.05);
        let s0 = c_alpha_test(&MomentSample::new(g.clone()).unwrap(), &cfg).unwrap();
        let s1 = c_alpha_test(&MomentSample::new(g.dot(&t.t())).unwrap(), &cfg).unwrap();
        prop_assert_eq!(s0.rank, d);
        prop_assert!((s0.statistic - s1.statistic).abs() < 1e-8 * (1.0 + s0.statistic));
    }

    #[test]
    fn normal_round_trip(p in 1e-8f64..(1.0 - 1e-8)) {
        prop_assert!((normal_cdf(normal_quantile(p).unwrap()) - p).abs() < 1e-7);
    }

    #[test]
    fn chi2_round_trip(df in 1usize..40, p in 1e-6f64..(1.0 - 1e-6)) {
        let q = chi2_quantile(df, p).unwrap();
        prop_assert!((chi2_cdf(df, q).unwrap() - p).abs() < 1e-7);
    }

    #[test]
    fn projection_is_idempotent_and_orthogonal(n in 10usize..60, m in 0usize..4, c in 1usize..3, seed in any::<u64>()) {
        prop_assume!(n > m + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cand = gaussian(n, c, &mut rng);
        let nuis = gaussian(n, m, &mut rng);
        let p = project_out(cand.view(), nuis.view()).unwrap();
        prop_assert!(p.dropped.is_empty());
        prop_assert!(p.residuals.t().dot(&nuis).iter().all(|v| v.abs() < 1e-8));
        let again = project_out(p.residuals.view(), nuis.view()).unwrap();
        prop_assert!(max_abs_diff(&again.residuals, &p.residuals) < 1e-8);
    }

    #[test]
    fn loo_matches_explicit_refits(n in 8usize..=50, p in 1usize..5, seed in any::<u64>()) {
        prop_assume!(n > p + 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut design = gaussian(n, p, &mut rng);
        design.column_mut(0).fill(1.0);
        let y = gaussian(n, 2, &mut rng);
        let loo = loo_from_design(design.view(), y.view()).unwrap();
        for i in 0..n {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let xs = design.select(ndarray::Axis(0), &keep);
            let ys = y.select(ndarray::Axis(0), &keep);
            let beta = spd_solve(xs.t().dot(&xs).view(), xs.t().dot(&ys).view()).unwrap();
            let pred = design.row(i).dot(&beta);
            for c in 0..2 {
                prop_assert!((pred[c] - loo.values[[i, c]]).abs() < 1e-9 * (1.0 + pred[c].abs()));
            }
        }
    }

    #[test]
    fn power_falls_with_rank(a in 0.1f64..40.0, r in 1usize..10) {
        let pw = |rank| asymptotic_power(&PowerSpec { rank, noncentrality: a, alpha: 0.05 }).unwrap();
        prop_assert!(pw(r + 1) < pw(r));
    }

    #[test]
    fn power_rises_with_noncentrality(a in 0.0f64..40.0, da in 0.01f64..5.0, r in 1usize..10) {
        let pw = |nc| asymptotic_power(&PowerSpec { rank: r, noncentrality: nc, alpha: 0.05 }).unwrap();
        prop_assert!(pw(a + da) > pw(a));
    }
}

/// Largest gap between the empirical CDF of `xs` and `cdf`.
fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

// 1% critical value of the one-sample KS statistic
fn ks_critical(m: usize) -> f64 {
    1.63 / (m as f64).sqrt()
}

#[test]
fn statistic_is_chi_squared_under_the_null() {
    let reps = 2000;
    for d in [1usize, 3] {
        let stats = replicate(reps, 11, d as u64, |_, rng| {
            let ms = MomentSample::new(gaussian(400, d, rng)).unwrap();
            c_alpha_test(&ms, &TestConfig::thresholded(0.05, 1e-3)).unwrap().statistic
        });
        let ks = ks_distance(stats, |x| chi2_cdf(d, x).unwrap());
        assert!(ks < ks_critical(reps), "d = {d}: KS distance {ks}");
    }
}

#[test]
fn reduced_rank_statistic_uses_reduced_degrees_of_freedom() {
    // three moments spanning a two-dimensional space
    let reps = 2000;
    let out = replicate(reps, 12, 0, |_, rng| {
        let base = gaussian(400, 2, rng);
        let mut g = Array2::zeros((400, 3));
        g.column_mut(0).assign(&base.column(0));
        g.column_mut(1).assign(&base.column(1));
        g.column_mut(2).assign(&(&base.column(0) + &base.column(1)));
        let r = c_alpha_test(&MomentSample::new(g).unwrap(), &TestConfig::thresholded(0.05, 1e-3)).unwrap();
        (r.rank, r.statistic)
    });
    assert!(out.iter().all(|&(r, _)| r == 2));
    let ks = ks_distance(out.into_iter().map(|(_, s)| s).collect(), |x| chi2_cdf(2, x).unwrap());
    assert!(ks < ks_critical(reps), "KS distance {ks}");
}
