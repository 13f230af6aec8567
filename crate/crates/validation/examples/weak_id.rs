//! ψ size in the weakest Design 2 cell as the error correlation varies.
//!
//! `cargo run --release -p calpha-validation --example weak_id`

use calpha_core::iv::{FirstStage, IvData, IvDesign, IvScorer, OrderRule, IV_THRESHOLD};
use calpha_core::mc::{replicate, RejectionRate};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Design 2 at θ = 0 with Corr(w_ε, w_υ) = `rho` instead of the fixed 0.95.
fn simulate(d: &IvDesign, rho: f64, rng: &mut ChaCha8Rng) -> IvData {
    let n = d.n;
    let mut y = Array1::zeros(n);
    let mut x = Array2::zeros((n, 1));
    let mut z2 = Array2::zeros((n, 2));
    for i in 0..n {
        let (a, b, w1, w2): (f64, f64, f64, f64) =
            (rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let za = a;
        let zb = 0.4 * a + 0.84f64.sqrt() * b;
        let eps = (1.0 + za.sin().powi(2)).sqrt() * w1;
        let v = (1.0 + zb.cos().powi(2)).sqrt() * (rho * w1 + (1.0 - rho * rho).sqrt() * w2);
        x[[i, 0]] = 0.5 * (d.pi[0].eval(za) + d.pi[1].eval(zb)) + v;
        y[i] = 1.0 + eps;
        z2[[i, 0]] = za;
        z2[[i, 1]] = zb;
    }
    IvData::new(y, x, Array2::ones((n, 1)), z2).expect("valid design")
}

fn main() {
    let d = IvDesign::parse("d2-exp-exp-3", 600).unwrap();
    println!("rho,order,erf,rank0");
    for rho in [0.0, 0.5, 0.95] {
        for rule in [OrderRule::Fixed(2), OrderRule::Fixed(3)] {
            let out = replicate(2000, 5, 9, |_, rng| {
                let data = simulate(&d, rho, rng);
                let r = IvScorer::new(&data, FirstStage::new(rule)).and_then(|s| s.psi(&[0.0], 0.05, IV_THRESHOLD));
                r.map(|r| (r.reject, r.rank)).map_err(|e| e.to_string())
            });
            let decisions: Vec<Result<bool, String>> = out.iter().map(|o| o.clone().map(|o| o.0)).collect();
            let rank0 = out.iter().filter(|o| matches!(o, Ok((_, 0)))).count();
            println!("{rho},{rule},{:.2},{rank0}", 100.0 * RejectionRate::from_outcomes(&decisions).rate());
        }
    }
}
