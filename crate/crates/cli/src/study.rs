//! Monte Carlo study runners shared by the commands and the acceptance suite.

use calpha_core::iv::{ar_test, simulate_iv_with, FirstStage, IvDesign, IvScorer, OrderRule};
use calpha_core::mc::{replicate, RejectionRate};
use calpha_core::sim::{psi_test_sim, simulate_sim_with, wald_test_ichimura, SimDesign};

/// Stable 64-bit FNV-1a hash used to derive per-cell stream tags.
pub fn stream_tag(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimTest {
    Psi,
    Wald,
}

impl SimTest {
    pub fn name(self) -> &'static str {
        match self {
            SimTest::Psi => "psi",
            SimTest::Wald => "wald",
        }
    }
}

/// One rejection tally per requested test.
#[derive(Debug, Clone, PartialEq)]
pub struct Tally {
    pub test: String,
    pub rate: RejectionRate,
}

fn tally(names: Vec<String>, outcomes: &[Vec<Result<bool, String>>]) -> Vec<Tally> {
    names
        .into_iter()
        .enumerate()
        .map(|(j, test)| {
            let col: Vec<Result<bool, String>> = outcomes.iter().map(|o| o[j].clone()).collect();
            Tally { test, rate: RejectionRate::from_outcomes(&col) }
        })
        .collect()
}

/// Rejection frequencies of `H₀: θ = θ₀` on data drawn from `design`.
pub fn sim_rejections(
    design: &SimDesign,
    theta0: f64,
    reps: usize,
    seed: u64,
    tag: u64,
    alpha: f64,
    threshold: f64,
    tests: &[SimTest],
) -> Vec<Tally> {
    let outcomes = replicate(reps, seed, tag, |_, rng| {
        let data = simulate_sim_with(design, rng);
        tests
            .iter()
            .map(|t| match t {
                SimTest::Psi => psi_test_sim(&data, theta0, alpha, threshold).map(|r| r.reject),
                SimTest::Wald => wald_test_ichimura(&data, theta0, alpha).map(|w| w.result.reject),
            })
            .map(|r| r.map_err(|e| e.to_string()))
            .collect::<Vec<_>>()
    });
    tally(tests.iter().map(|t| t.name().to_string()).collect(), &outcomes)
}

pub fn psi_label(rule: OrderRule) -> String {
    match rule {
        OrderRule::Fixed(k) => format!("psi_k{k}"),
        OrderRule::Aic => "psi_aic".into(),
        OrderRule::Bic => "psi_bic".into(),
    }
}

/// Rejection frequencies of the ψ tests (one per order rule) and optionally AR.
pub fn iv_rejections(
    design: &IvDesign,
    theta0: &[f64],
    reps: usize,
    seed: u64,
    tag: u64,
    alpha: f64,
    threshold: f64,
    orders: &[OrderRule],
    with_ar: bool,
) -> Vec<Tally> {
    let outcomes = replicate(reps, seed, tag, |_, rng| {
        let data = simulate_iv_with(design, rng);
        let mut row: Vec<Result<bool, String>> = Vec::with_capacity(orders.len() + 1);
        if with_ar {
            row.push(ar_test(&data, theta0, alpha).map(|r| r.reject).map_err(|e| e.to_string()));
        }
        for &rule in orders {
            let r = IvScorer::new(&data, FirstStage::new(rule)).and_then(|s| s.psi(theta0, alpha, threshold));
            row.push(r.map(|r| r.reject).map_err(|e| e.to_string()));
        }
        row
    });
    let mut names = Vec::new();
    if with_ar {
        names.push("ar".to_string());
    }
    names.extend(orders.iter().map(|&r| psi_label(r)));
    tally(names, &outcomes)
}
