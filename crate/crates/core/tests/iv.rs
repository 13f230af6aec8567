use calpha_core::engine::{aggregate, second_moment};
use calpha_core::iv::*;
use calpha_core::mc::{replicate, rng_for};
use calpha_core::numerics::chi2_cdf;
use calpha_core::Error;
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use std::io::Write;

fn design(name: &str, n: usize) -> IvDesign {
    IvDesign::parse(name, n).unwrap()
}

fn cov(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let (ma, mb) = (a.mean().unwrap(), b.mean().unwrap());
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
}

#[test]
fn same_seed_same_data() {
    let d = design("d1-exp-log-1-3", 300);
    assert_eq!(simulate_iv(&d, 9), simulate_iv(&d, 9));
    assert_ne!(simulate_iv(&d, 9).y, simulate_iv(&d, 10).y);
}

#[test]
fn design1_moments() {
    let d = design("d1-exp-exp-1", 1_000_000);
    let mut rng = rng_for(1, 0, 0);
    let (data, eps) = simulate_iv_with_errors(&d, &mut rng);
    let z_a = data.z2.column(0).to_owned();
    let z_b = data.z2.column(1).to_owned();
    assert!((cov(&z_a, &z_a) - 1.0).abs() < 0.01);
    assert!((cov(&z_b, &z_b) - 1.0).abs() < 0.01);
    assert!((cov(&z_a, &z_b) - 0.4).abs() < 0.01);
    let u1 = &data.x.column(0) - &z_a.mapv(|z| d.pi[0].eval(z));
    let u2 = &data.x.column(1) - &z_b.mapv(|z| d.pi[1].eval(z));
    assert!((cov(&eps, &eps) - 1.0).abs() < 0.01);
    assert!((cov(&eps, &u1) - 0.9).abs() < 0.01);
    assert!((cov(&eps, &u2) - 0.9).abs() < 0.01);
    assert!((cov(&u1, &u2) - 0.7).abs() < 0.01);
    let implied = &data.y - IV_BETA;
    assert!(implied.iter().zip(&eps).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn design2_base_correlation_before_scaling() {
    let d = design("d2-exp-log-1-2", 1_000_000);
    let mut rng = rng_for(2, 0, 0);
    let (data, eps) = simulate_iv_with_errors(&d, &mut rng);
    let z_a = data.z2.column(0);
    let z_b = data.z2.column(1);
    let e_tilde: Array1<f64> = eps.iter().zip(z_a).map(|(e, z)| e / (1.0 + z.sin().powi(2)).sqrt()).collect();
    let v_tilde: Array1<f64> = (0..d.n)
        .map(|i| {
            let v = data.x[[i, 0]] - 0.5 * (d.pi[0].eval(z_a[i]) + d.pi[1].eval(z_b[i]));
            v / (1.0 + z_b[i].cos().powi(2)).sqrt()
        })
        .collect();
    let r = cov(&e_tilde, &v_tilde) / (cov(&e_tilde, &e_tilde) * cov(&v_tilde, &v_tilde)).sqrt();
    assert!((r - 0.95).abs() < 0.005, "{r}");
    assert!((cov(&e_tilde, &e_tilde) - 1.0).abs() < 0.01);
}

#[test]
fn oracle_moment_has_mean_zero() {
    // g = E[ε²]⁻¹ ε (π(Z) - E[X]) with the population first stage
    let d = design("d1-exp-log-1-1", 400_000);
    let mut rng = rng_for(3, 0, 0);
    let (data, eps) = simulate_iv_with_errors(&d, &mut rng);
    for c in 0..2 {
        let pi: Array1<f64> = data.z2.column(c).mapv(|z| d.pi[c].eval(z));
        let centred = &pi - pi.mean().unwrap();
        let g: Array1<f64> = &eps * &centred;
        let m = g.mean().unwrap();
        let se = (cov(&g, &g) / g.len() as f64).sqrt();
        assert!(m.abs() < 3.0 * se, "component {c}: {m} vs se {se}");
    }
}

fn no_signal_data(n: usize, seed: u64, theta: f64) -> IvData {
    // X does not depend on Z₂: the direction is unidentified
    let mut d = simulate_iv(&design("d2-exp-exp-1", n), seed);
    let mut rng = rng_for(seed, 1, 0);
    use rand_distr::{Distribution, StandardNormal};
    for i in 0..n {
        let u: f64 = StandardNormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        d.x[[i, 0]] = 2.0 + u;
        d.y[i] = theta * d.x[[i, 0]] + IV_BETA + 0.8 * u + 0.6 * e;
    }
    d
}

#[test]
fn unidentified_direction_has_centred_moment() {
    let g: Vec<f64> = replicate(300, 4, 0, |r, _| {
        let data = no_signal_data(400, 100 + r as u64, 0.0);
        let ms = feasible_moment_iv(&data, &[0.0], OrderRule::Fixed(3)).unwrap();
        aggregate(&ms)[0]
    });
    let g = Array1::from(g);
    let se = (cov(&g, &g) / g.len() as f64).sqrt();
    assert!(g.mean().unwrap().abs() < 3.0 * se);
}

#[test]
fn zero_noise_is_a_degenerate_variance() {
    let mut data = simulate_iv(&design("d1-exp-exp-1", 200), 5);
    data.y = data.x.sum_axis(Axis(1)) * 0.5 + IV_BETA;
    let err = feasible_moment_iv(&data, &[0.5, 0.5], OrderRule::Fixed(3)).unwrap_err();
    assert!(matches!(err, Error::DegenerateVariance(_)), "{err}");
}

#[test]
fn collinear_z1_is_rejected() {
    let mut data = simulate_iv(&design("d1-exp-exp-1", 200), 6);
    data.z1 = Array2::ones((200, 2));
    let err = psi_test_iv(&data, &[0.0, 0.0], 0.05, IV_THRESHOLD, OrderRule::Fixed(3)).unwrap_err();
    assert!(matches!(err, Error::Collinear(_)));
}

#[test]
fn basis_too_large_for_sample() {
    let data = simulate_iv(&design("d1-exp-exp-1", 30), 7);
    assert!(psi_test_iv(&data, &[0.0, 0.0], 0.05, IV_THRESHOLD, OrderRule::Fixed(7)).is_err());
}

#[test]
fn order_rules_parse_and_select() {
    assert_eq!("k:3".parse::<OrderRule>().unwrap(), OrderRule::Fixed(3));
    assert_eq!("BIC".parse::<OrderRule>().unwrap(), OrderRule::Bic);
    assert!("k:x".parse::<OrderRule>().is_err());
    assert!("cv".parse::<OrderRule>().is_err());
    let data = simulate_iv(&design("d1-exp-exp-1", 400), 8);
    for rule in [OrderRule::Aic, OrderRule::Bic] {
        let s = IvScorer::new(&data, FirstStage::new(rule)).unwrap();
        assert!(IC_ORDERS.contains(&s.order()));
    }
    let aic = IvScorer::new(&data, FirstStage::new(OrderRule::Aic)).unwrap().order();
    let bic = IvScorer::new(&data, FirstStage::new(OrderRule::Bic)).unwrap().order();
    assert!(bic <= aic);
}

#[test]
fn psi_rejects_far_alternative_in_strong_design() {
    let data = simulate_iv(&design("d2-exp-exp-1", 400), 9);
    assert!(psi_test_iv(&data, &[1.0], 0.05, IV_THRESHOLD, OrderRule::Fixed(3)).unwrap().reject);
}

#[test]
fn ar_null_distribution_is_chi_squared() {
    let stats: Vec<f64> = replicate(500, 10, 0, |_, rng| {
        let data = simulate_iv_with(&design("d1-log-log-1", 1000), rng);
        ar_test(&data, &[0.0, 0.0], 0.05).unwrap().statistic
    });
    let mut s = stats.clone();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = chi2_cdf(2, x).unwrap();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 1.36 / n.sqrt(), "KS distance {d}");
}

#[test]
fn ci_matches_pointwise_tests() {
    let data = simulate_iv(&design("d2-log-log-1", 300), 11);
    let scorer = IvScorer::new(&data, FirstStage::new(OrderRule::Fixed(3))).unwrap();
    let grid = linear_grid(-0.5, 0.5, 201).unwrap();
    let ci = invert_ci(&scorer, grid.clone(), 0.05, IV_THRESHOLD).unwrap();
    for (t, acc) in grid.iter().zip(&ci.accepted) {
        let r = psi_test_iv(&data, &[*t], 0.05, IV_THRESHOLD, OrderRule::Fixed(3)).unwrap();
        assert_eq!(*acc, !r.reject, "θ₀ = {t}");
    }
    let (lo, hi) = ci.interval.unwrap();
    assert!(grid.contains(&lo) && grid.contains(&hi));
    assert!(lo < 0.0 && hi > 0.0);
}

#[test]
fn accepted_set_grows_as_alpha_shrinks() {
    let data = simulate_iv(&design("d2-log-log-2", 300), 12);
    let scorer = IvScorer::new(&data, FirstStage::new(OrderRule::Fixed(3))).unwrap();
    let grid = linear_grid(-1.0, 1.0, 201).unwrap();
    let mut previous: Option<Vec<bool>> = None;
    for alpha in [0.2, 0.05, 0.01, 1e-4, 1e-8] {
        let ci = invert_ci(&scorer, grid.clone(), alpha, IV_THRESHOLD).unwrap();
        if let Some(p) = &previous {
            assert!(p.iter().zip(&ci.accepted).all(|(a, b)| !a || *b), "alpha {alpha}");
        }
        previous = Some(ci.accepted);
    }
    let tiny = invert_ci(&scorer, linear_grid(-0.05, 0.05, 21).unwrap(), 1e-15, IV_THRESHOLD).unwrap();
    assert!(tiny.accepted.iter().all(|&a| a));
}

#[test]
fn unidentified_design_gives_uninformative_ci() {
    let data = no_signal_data(400, 13, 0.0);
    let scorer = IvScorer::new(&data, FirstStage::new(OrderRule::Fixed(3))).unwrap();
    let ci = invert_ci(&scorer, linear_grid(-20.0, 20.0, 401).unwrap(), 0.05, IV_THRESHOLD).unwrap();
    let share = ci.accepted.iter().filter(|&&a| a).count() as f64 / 401.0;
    assert!(share > 0.8, "accepted share {share}");
}

#[test]
fn ci_needs_scalar_theta() {
    let data = simulate_iv(&design("d1-exp-exp-1", 200), 14);
    let scorer = IvScorer::new(&data, FirstStage::new(OrderRule::Fixed(3))).unwrap();
    assert!(invert_ci(&scorer, vec![0.0, 1.0], 0.05, IV_THRESHOLD).is_err());
}

#[test]
fn csv_round_trip_is_exact() {
    let data = simulate_iv(&design("d1-exp-log-2-3", 120), 15);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let map = write_csv(&data, &path).unwrap();
    assert_eq!(load_csv(&path, &map, false).unwrap(), data);
    let mut no_z1 = map.clone();
    no_z1.z1.clear();
    assert_eq!(load_csv(&path, &no_z1, true).unwrap(), data);
}

fn write_file(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
    let path = dir.path().join("f.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(body.as_bytes()).unwrap();
    path
}

#[test]
fn csv_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let map = ColumnMap::parse("y=y,x=x,z2=z").unwrap();

    let p = write_file(&dir, "y,x,z\n1,2,3\n4,abc,6\n");
    match load_csv(&p, &map, true).unwrap_err() {
        Error::Parse { row, column, .. } => assert_eq!((row, column.as_str()), (2, "x")),
        e => panic!("{e}"),
    }

    let p = write_file(&dir, "y,x,z\n1,2,3\n4,5,\n");
    match load_csv(&p, &map, true).unwrap_err() {
        Error::MissingData { row, column } => assert_eq!((row, column.as_str()), (2, "z")),
        e => panic!("{e}"),
    }

    let p = write_file(&dir, "y,x,w\n1,2,3\n");
    match load_csv(&p, &map, true).unwrap_err() {
        Error::Schema(msg) => assert!(msg.contains("'z'")),
        e => panic!("{e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn translation_covariance(seed in 0u64..1000, d1 in -3.0f64..3.0, d2 in -3.0f64..3.0, t1 in -1.0f64..1.0, t2 in -1.0f64..1.0) {
        let data = simulate_iv(&design("d1-exp-log-1-2", 150), seed);
        let mut shifted = data.clone();
        shifted.y = &data.y + &data.x.dot(&Array1::from(vec![d1, d2]));
        let a = IvScorer::new(&data, FirstStage::new(OrderRule::Fixed(3))).unwrap();
        let b = IvScorer::new(&shifted, FirstStage::new(OrderRule::Fixed(3))).unwrap();
        let ea = a.residuals(&[t1, t2]).unwrap();
        let eb = b.residuals(&[t1 + d1, t2 + d2]).unwrap();
        prop_assert!(ea.iter().zip(&eb).all(|(x, y)| (x - y).abs() < 1e-10));
        let ga = a.moment(&[t1, t2]).unwrap();
        let gb = b.moment(&[t1 + d1, t2 + d2]).unwrap();
        prop_assert!(ga.rows().iter().zip(gb.rows().iter()).all(|(x, y)| (x - y).abs() < 1e-10));
        let ra = a.psi(&[t1, t2], 0.05, IV_THRESHOLD).unwrap();
        let rb = b.psi(&[t1 + d1, t2 + d2], 0.05, IV_THRESHOLD).unwrap();
        prop_assert!((ra.statistic - rb.statistic).abs() < 1e-10 * (1.0 + ra.statistic));
        prop_assert_eq!(ra.rank, rb.rank);
        prop_assert_eq!(ra.reject, rb.reject);
    }

    #[test]
    fn ar_scale_invariance(seed in 0u64..1000, c in 0.01f64..100.0) {
        let data = simulate_iv(&design("d2-log-exp-2-1", 150), seed);
        let mut scaled = data.clone();
        scaled.y = &data.y * c;
        let a = ar_test(&data, &[0.0], 0.05).unwrap();
        let b = ar_test(&scaled, &[0.0], 0.05).unwrap();
        prop_assert!((a.statistic - b.statistic).abs() < 1e-8 * (1.0 + a.statistic));
    }

    #[test]
    fn moment_second_moment_is_consistent(seed in 0u64..1000) {
        let data = simulate_iv(&design("d2-exp-exp-1", 120), seed);
        let ms = feasible_moment_iv(&data, &[0.0], OrderRule::Fixed(2)).unwrap();
        let v = second_moment(&ms).as_array()[[0, 0]];
        let direct = ms.rows().column(0).mapv(|g| g * g).sum() / 120.0;
        prop_assert!((v - direct).abs() < 1e-12 * (1.0 + v));
    }
}
