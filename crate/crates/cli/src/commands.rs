//! The five subcommands.

use serde_json::{json, Value};

use calpha_core::engine::{asymptotic_power, two_sided_power_bound, PowerSpec, TestResult};
use calpha_core::iv::{
    invert_ci, load_csv, simulate_iv, ColumnMap, FirstStage, IvData, IvDesign, IvScorer, IvVariant, OrderRule,
    IV_THETA0, IV_THRESHOLD,
};
use calpha_core::sim::{SimDesign, SIM_MIN_N, SIM_THETA0, SIM_THRESHOLD};

use crate::args::{BoundsArgs, Grid, Model, RunArgs};
use crate::output::{flag, num, CsvOut};
use crate::study::{iv_rejections, psi_label, sim_rejections, stream_tag, SimTest, Tally};
use crate::{usage, CliError, CliResult, DEFAULT_REPS, DEFAULT_SURFACE_REPS};

const IV_FAMILIES: [&str; 3] = ["exp-exp", "log-log", "exp-log"];

fn sim_design_names(a: &RunArgs) -> CliResult<Vec<String>> {
    if a.design.is_empty() || a.design.iter().any(|d| d == "all") {
        return Ok(SimDesign::all(SIM_MIN_N).iter().map(|d| d.name()).collect());
    }
    for d in &a.design {
        if SimDesign::parse(d, SIM_MIN_N).is_err() {
            let valid: Vec<String> = SimDesign::all(SIM_MIN_N).iter().map(|d| d.name()).collect();
            return usage(format!("unknown sim design '{d}'; valid: {}", valid.join(", ")));
        }
    }
    Ok(a.design.clone())
}

fn iv_design_names(a: &RunArgs) -> CliResult<Vec<String>> {
    if a.design.is_empty() || a.design.iter().any(|d| d == "all") {
        let mut out = Vec::new();
        for v in ["d1", "d2"] {
            for fam in IV_FAMILIES {
                for j in 1..=3 {
                    out.push(format!("{v}-{fam}-{j}-{j}"));
                }
            }
        }
        return Ok(out);
    }
    for d in &a.design {
        if let Err(e) = IvDesign::parse(d, 10) {
            return usage(e.to_string());
        }
    }
    Ok(a.design.iter().map(|d| IvDesign::parse(d, 10).expect("checked").name()).collect())
}

fn sample_sizes(a: &RunArgs) -> CliResult<Vec<usize>> {
    let ns = if a.n.is_empty() {
        vec![if a.model == Model::Sim { 800 } else { 400 }]
    } else {
        a.n.clone()
    };
    if a.model == Model::Sim && ns.iter().any(|&n| n < SIM_MIN_N) {
        return usage(format!("sim sample sizes must be at least {SIM_MIN_N}"));
    }
    if ns.iter().any(|&n| n < 10) {
        return usage("sample sizes must be at least 10");
    }
    Ok(ns)
}

fn replications(a: &RunArgs, default: usize) -> CliResult<usize> {
    match a.reps {
        Some(0) => usage("--reps must be positive"),
        Some(r) => Ok(r),
        None => Ok(default),
    }
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return usage(format!("--alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

fn threshold(a: &RunArgs) -> CliResult<f64> {
    let t = a.threshold.unwrap_or(if a.model == Model::Sim { SIM_THRESHOLD } else { IV_THRESHOLD });
    if !(t >= 0.0 && t.is_finite()) {
        return usage(format!("--threshold must be finite and >= 0, got {t}"));
    }
    Ok(t)
}

fn orders(a: &RunArgs) -> Vec<OrderRule> {
    if a.order.is_empty() {
        vec![OrderRule::Fixed(3)]
    } else {
        a.order.clone()
    }
}

fn sim_tests(a: &RunArgs, default: &[SimTest]) -> CliResult<Vec<SimTest>> {
    if a.tests.is_empty() {
        return Ok(default.to_vec());
    }
    a.tests
        .iter()
        .map(|t| match t.as_str() {
            "psi" => Ok(SimTest::Psi),
            "wald" => Ok(SimTest::Wald),
            other => usage(format!("unknown sim test '{other}' (psi, wald)")),
        })
        .collect()
}

/// Whether AR is requested; ψ is always run for each order rule unless only AR is asked for.
fn iv_tests(a: &RunArgs) -> CliResult<(bool, bool)> {
    if a.tests.is_empty() {
        return Ok((true, true));
    }
    let (mut psi, mut ar) = (false, false);
    for t in &a.tests {
        match t.as_str() {
            "psi" => psi = true,
            "ar" => ar = true,
            other => return usage(format!("unknown iv test '{other}' (psi, ar)")),
        }
    }
    Ok((psi, ar))
}

fn base_manifest(command: &str, a: &RunArgs) -> CliResult<Value> {
    Ok(json!({
        "command": command,
        "model": a.model.to_string(),
        "seed": a.seed,
        "alpha": a.alpha,
        "threshold": threshold(a)?,
        "version": env!("CARGO_PKG_VERSION"),
    }))
}

fn extend(v: &mut Value, extra: Value) {
    if let (Value::Object(m), Value::Object(e)) = (v, extra) {
        m.extend(e);
    }
}

fn percent(t: &Tally) -> (String, String) {
    let r = &t.rate;
    (num((r.rejections * 100) as f64 / r.reps as f64), num(100.0 * r.mc_se()))
}

pub fn variant_tag(v: IvVariant) -> &'static str {
    match v {
        IvVariant::Design1 => "d1",
        IvVariant::Design2 => "d2",
    }
}

pub fn cmd_size(a: &RunArgs) -> CliResult<()> {
    check_alpha(a.alpha)?;
    let reps = replications(a, DEFAULT_REPS)?;
    let ns = sample_sizes(a)?;
    let thr = threshold(a)?;
    let header = ["model", "design", "n", "test", "erf", "mc_se", "reps", "seed", "failures"];
    let mut manifest = base_manifest("size", a)?;
    let mut rows: Vec<(String, usize, Vec<Tally>)> = Vec::new();
    match a.model {
        Model::Sim => {
            let designs = sim_design_names(a)?;
            let tests = sim_tests(a, &[SimTest::Psi, SimTest::Wald])?;
            extend(&mut manifest, json!({"designs": designs, "n": ns, "reps": reps,
                "tests": tests.iter().map(|t| t.name()).collect::<Vec<_>>(), "theta0": SIM_THETA0}));
            for name in &designs {
                for &n in &ns {
                    let d = SimDesign::parse(name, n)?;
                    let tag = stream_tag(&format!("size/sim/{name}/{n}"));
                    rows.push((name.clone(), n, sim_rejections(&d, SIM_THETA0, reps, a.seed, tag, a.alpha, thr, &tests)));
                }
            }
        }
        Model::Iv => {
            let designs = iv_design_names(a)?;
            let (psi, ar) = iv_tests(a)?;
            let rules = if psi { orders(a) } else { Vec::new() };
            extend(&mut manifest, json!({"designs": designs, "n": ns, "reps": reps,
                "orders": rules.iter().map(|r| r.to_string()).collect::<Vec<_>>(), "ar": ar}));
            for name in &designs {
                for &n in &ns {
                    let d = IvDesign::parse(name, n)?;
                    let theta0 = vec![IV_THETA0; d.variant.dim_theta()];
                    // shared draws across designs of a variant, so AR is the same in every cell
                    let tag = stream_tag(&format!("size/iv/{}/{n}", variant_tag(d.variant)));
                    rows.push((name.clone(), n, iv_rejections(&d, &theta0, reps, a.seed, tag, a.alpha, thr, &rules, ar)));
                }
            }
        }
    }
    let mut out = CsvOut::new(&manifest, &header);
    for (name, n, tallies) in rows {
        for t in tallies {
            let (erf, se) = percent(&t);
            out.row(&[
                a.model.to_string(),
                name.clone(),
                n.to_string(),
                t.test.clone(),
                erf,
                se,
                t.rate.reps.to_string(),
                a.seed.to_string(),
                t.rate.failures.to_string(),
            ]);
        }
    }
    out.finish(a.out.as_deref())?;
    Ok(())
}

fn alternative(theta0: f64, tau: f64, n: usize, local: bool) -> f64 {
    if local {
        theta0 + tau / (n as f64).sqrt()
    } else {
        theta0 + tau
    }
}

pub fn cmd_power(a: &RunArgs) -> CliResult<()> {
    check_alpha(a.alpha)?;
    let ns = sample_sizes(a)?;
    let thr = threshold(a)?;
    let mut manifest = base_manifest("power", a)?;
    match a.model {
        Model::Sim => {
            let designs = sim_design_names(a)?;
            let tests = sim_tests(a, &[SimTest::Psi])?;
            let reps = replications(a, DEFAULT_REPS)?;
            let theta0 = scalar_theta0(a, SIM_THETA0)?;
            let grid = a.grid.unwrap_or(Grid { lo: -1.0, hi: 1.0, points: 21 });
            extend(&mut manifest, json!({"designs": designs, "n": ns, "reps": reps, "theta0": theta0,
                "grid": [grid.lo, grid.hi, grid.points], "local": a.local,
                "tests": tests.iter().map(|t| t.name()).collect::<Vec<_>>()}));
            let mut out = CsvOut::new(&manifest, &CURVE_HEADER);
            for name in &designs {
                for &n in &ns {
                    // common random numbers along the curve
                    let tag = stream_tag(&format!("power/sim/{name}/{n}"));
                    for tau in grid.values() {
                        let theta = alternative(theta0, tau, n, a.local);
                        let d = SimDesign::parse(name, n)?.with_theta(theta);
                        let tallies = sim_rejections(&d, theta0, reps, a.seed, tag, a.alpha, thr, &tests);
                        curve_rows(&mut out, a, name, n, theta, tau, tallies);
                    }
                }
            }
            out.finish(a.out.as_deref())?;
        }
        Model::Iv => {
            let designs = iv_design_names(a)?;
            let parsed: Vec<IvDesign> = designs.iter().map(|d| IvDesign::parse(d, 10)).collect::<Result<_, _>>()?;
            let variant = parsed[0].variant;
            if parsed.iter().any(|d| d.variant != variant) {
                return usage("one power run takes designs of a single variant (all d1 or all d2)");
            }
            let (psi, ar) = iv_tests(a)?;
            let rules = if psi { orders(a) } else { Vec::new() };
            extend(&mut manifest, json!({"designs": designs, "n": ns, "local": a.local,
                "orders": rules.iter().map(|r| r.to_string()).collect::<Vec<_>>(), "ar": ar}));
            match variant {
                IvVariant::Design2 => {
                    let reps = replications(a, DEFAULT_REPS)?;
                    let theta0 = scalar_theta0(a, IV_THETA0)?;
                    let grid = a.grid.unwrap_or(Grid { lo: -1.0, hi: 1.0, points: 21 });
                    extend(&mut manifest, json!({"reps": reps, "theta0": theta0, "grid": [grid.lo, grid.hi, grid.points]}));
                    let mut out = CsvOut::new(&manifest, &CURVE_HEADER);
                    for name in &designs {
                        for &n in &ns {
                            let tag = stream_tag(&format!("power/iv/{name}/{n}"));
                            for tau in grid.values() {
                                let theta = alternative(theta0, tau, n, a.local);
                                let d = IvDesign::parse(name, n)?.with_theta(vec![theta])?;
                                let tallies = iv_rejections(&d, &[theta0], reps, a.seed, tag, a.alpha, thr, &rules, ar);
                                curve_rows(&mut out, a, name, n, theta, tau, tallies);
                            }
                        }
                    }
                    out.finish(a.out.as_deref())?;
                }
                IvVariant::Design1 => {
                    let reps = replications(a, DEFAULT_SURFACE_REPS)?;
                    let theta0 = match a.theta0.as_slice() {
                        [] => vec![IV_THETA0; 2],
                        [t1, t2] => vec![*t1, *t2],
                        _ => return usage("Design 1 takes two --theta0 values"),
                    };
                    let default = Grid { lo: -1.0, hi: 1.0, points: 11 };
                    let (g1, g2) = (a.tau1.unwrap_or(default), a.tau2.unwrap_or(default));
                    extend(&mut manifest, json!({"reps": reps, "theta0": theta0,
                        "tau1": [g1.lo, g1.hi, g1.points], "tau2": [g2.lo, g2.hi, g2.points]}));
                    let header = ["model", "design", "n", "tau1", "tau2", "test", "rejection_rate", "mc_se", "reps", "failures"];
                    let mut out = CsvOut::new(&manifest, &header);
                    for name in &designs {
                        for &n in &ns {
                            let tag = stream_tag(&format!("power/iv/{name}/{n}"));
                            for t1 in g1.values() {
                                for t2 in g2.values() {
                                    let theta = vec![
                                        alternative(theta0[0], t1, n, a.local),
                                        alternative(theta0[1], t2, n, a.local),
                                    ];
                                    let d = IvDesign::parse(name, n)?.with_theta(theta)?;
                                    for t in iv_rejections(&d, &theta0, reps, a.seed, tag, a.alpha, thr, &rules, ar) {
                                        out.row(&[
                                            "iv".into(),
                                            name.clone(),
                                            n.to_string(),
                                            num(t1),
                                            num(t2),
                                            t.test.clone(),
                                            num(t.rate.rate()),
                                            num(t.rate.mc_se()),
                                            t.rate.reps.to_string(),
                                            t.rate.failures.to_string(),
                                        ]);
                                    }
                                }
                            }
                        }
                    }
                    out.finish(a.out.as_deref())?;
                }
            }
        }
    }
    Ok(())
}

const CURVE_HEADER: [&str; 10] =
    ["model", "design", "n", "theta", "tau", "test", "rejection_rate", "mc_se", "reps", "failures"];

fn curve_rows(out: &mut CsvOut, a: &RunArgs, name: &str, n: usize, theta: f64, tau: f64, tallies: Vec<Tally>) {
    for t in tallies {
        out.row(&[
            a.model.to_string(),
            name.to_string(),
            n.to_string(),
            num(theta),
            num(tau),
            t.test.clone(),
            num(t.rate.rate()),
            num(t.rate.mc_se()),
            t.rate.reps.to_string(),
            t.rate.failures.to_string(),
        ]);
    }
}

fn scalar_theta0(a: &RunArgs, default: f64) -> CliResult<f64> {
    match a.theta0.as_slice() {
        [] => Ok(default),
        [t] => Ok(*t),
        _ => usage("this design takes one --theta0 value"),
    }
}

fn load_data(a: &RunArgs) -> CliResult<(IvData, Value)> {
    let (Some(path), Some(map)) = (&a.data, &a.map) else {
        return usage("--data and --map are required");
    };
    let cols = ColumnMap::parse(map).map_err(|e| CliError::Usage(e.to_string()))?;
    let data = load_csv(path, &cols, a.intercept)?;
    let info = json!({"data": path.display().to_string(), "map": cols.to_spec(), "intercept": a.intercept});
    Ok((data, info))
}

fn describe(r: &TestResult) -> String {
    format!(
        "statistic {:.6} rank {} critical value {:.6} p-value {:.6} -> {}",
        r.statistic,
        r.rank,
        r.critical_value,
        r.p_value,
        if r.reject { "reject" } else { "do not reject" }
    )
}

pub fn cmd_test(a: &RunArgs) -> CliResult<()> {
    if a.model != Model::Iv {
        return usage("test runs on IV data; pass --model iv");
    }
    check_alpha(a.alpha)?;
    let thr = threshold(a)?;
    let (data, info) = load_data(a)?;
    let theta0 = if a.theta0.is_empty() { vec![0.0; data.dim_theta()] } else { a.theta0.clone() };
    if theta0.len() != data.dim_theta() {
        return usage(format!("--theta0 needs {} values", data.dim_theta()));
    }
    let rule = orders(a)[0];
    let (psi, ar) = iv_tests(a)?;
    let mut manifest = base_manifest("test", a)?;
    extend(&mut manifest, info);
    extend(&mut manifest, json!({"theta0": theta0, "order": rule.to_string(), "ar": ar, "psi": psi}));
    let header = ["test", "theta0", "statistic", "rank", "critical_value", "p_value", "reject", "order"];
    let mut out = CsvOut::new(&manifest, &header);
    let theta_txt = theta0.iter().map(|t| num(*t)).collect::<Vec<_>>().join(";");
    println!("n = {}, theta0 = [{}]", data.n(), theta_txt.replace(';', ", "));
    let scorer = IvScorer::new(&data, FirstStage::new(rule))?;
    let mut push = |name: &str, r: &TestResult, order: String| {
        println!("{name}: {}", describe(r));
        out.row(&[
            name.into(),
            theta_txt.clone(),
            num(r.statistic),
            r.rank.to_string(),
            num(r.critical_value),
            num(r.p_value),
            flag(r.reject),
            order,
        ]);
    };
    if psi {
        let r = scorer.psi(&theta0, a.alpha, thr)?;
        push(&psi_label(rule), &r, format!("k:{}", scorer.order()));
    }
    if ar {
        let r = scorer.ar(&theta0, a.alpha)?;
        push("ar", &r, String::new());
    }
    if let Some(p) = &a.out {
        out.finish(Some(p))?;
    }
    Ok(())
}

pub fn cmd_ci(a: &RunArgs) -> CliResult<()> {
    if a.model != Model::Iv {
        return usage("ci runs on IV data; pass --model iv");
    }
    check_alpha(a.alpha)?;
    let thr = threshold(a)?;
    let Some(grid) = a.grid else {
        return usage("--grid lo,hi[,points] is required");
    };
    if grid.points < 2 {
        return usage("--grid needs at least 2 points");
    }
    let mut manifest = base_manifest("ci", a)?;
    let data = if a.data.is_some() {
        let (data, info) = load_data(a)?;
        extend(&mut manifest, info);
        data
    } else {
        let [name] = a.design.as_slice() else {
            return usage("ci needs --data or exactly one --design to simulate");
        };
        let n = match a.n.as_slice() {
            [] => 400,
            [n] => *n,
            _ => return usage("ci takes one --n"),
        };
        let d = IvDesign::parse(name, n).map_err(|e| CliError::Usage(e.to_string()))?;
        extend(&mut manifest, json!({"design": d.name(), "n": n}));
        simulate_iv(&d, a.seed)
    };
    let rule = orders(a)[0];
    let scorer = IvScorer::new(&data, FirstStage::new(rule))?;
    extend(&mut manifest, json!({"grid": [grid.lo, grid.hi, grid.points], "order": rule.to_string()}));
    let ci = invert_ci(&scorer, grid.values(), a.alpha, thr)?;
    let mut out = CsvOut::new(&manifest, &["theta", "accepted"]);
    for (t, acc) in ci.grid.iter().zip(&ci.accepted) {
        out.row(&[num(*t), flag(*acc)]);
    }
    let accepted = ci.accepted.iter().filter(|&&x| x).count();
    let summary = match ci.interval {
        Some((lo, hi)) => format!(
            "interval=[{},{}] disconnected={} empty=false accepted={accepted}/{} order=k:{}",
            num(lo),
            num(hi),
            ci.disconnected,
            ci.grid.len(),
            scorer.order()
        ),
        None => format!("interval=none disconnected=false empty=true accepted=0/{} order=k:{}", ci.grid.len(), scorer.order()),
    };
    out.comment(&format!("summary {summary}"));
    if a.out.is_some() {
        println!("{summary}");
    }
    out.finish(a.out.as_deref())?;
    Ok(())
}

pub fn cmd_bounds(a: &BoundsArgs) -> CliResult<()> {
    check_alpha(a.alpha)?;
    let manifest_base = json!({"command": "bounds", "alpha": a.alpha, "version": env!("CARGO_PKG_VERSION")});
    match (a.info, a.a) {
        (Some(_), Some(_)) => usage("give either --r/--a or --info/--tau, not both"),
        (Some(info), None) => {
            let Some(tau) = a.tau else {
                return usage("--info needs a --tau grid");
            };
            if !(info >= 0.0 && info.is_finite()) {
                return usage("--info must be finite and >= 0");
            }
            let mut manifest = manifest_base;
            extend(&mut manifest, json!({"info": info, "tau": [tau.lo, tau.hi, tau.points]}));
            let mut out = CsvOut::new(&manifest, &["info", "tau", "alpha", "two_sided_bound"]);
            for t in tau.values() {
                let b = two_sided_power_bound(info, t, a.alpha)?;
                out.row(&[num(info), num(t), num(a.alpha), num(b)]);
            }
            out.finish(a.out.as_deref())?;
            Ok(())
        }
        (None, Some(grid)) => {
            if a.r.is_empty() {
                return usage("--r needs at least one rank");
            }
            if grid.lo < 0.0 {
                return usage("noncentrality grid must be >= 0");
            }
            let mut manifest = manifest_base;
            extend(&mut manifest, json!({"r": a.r, "a": [grid.lo, grid.hi, grid.points]}));
            let mut out = CsvOut::new(&manifest, &["r", "a", "alpha", "power_bound"]);
            for &r in &a.r {
                for nc in grid.values() {
                    let p = asymptotic_power(&PowerSpec { rank: r, noncentrality: nc, alpha: a.alpha })?;
                    out.row(&[r.to_string(), num(nc), num(a.alpha), num(p)]);
                }
            }
            out.finish(a.out.as_deref())?;
            Ok(())
        }
        (None, None) => usage("bounds needs --r with --a, or --info with --tau"),
    }
}
