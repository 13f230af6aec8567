use std::path::Path;
use std::process::{Command, Output};

fn calpha(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calpha")).args(args).output().expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = calpha(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn size_runs_are_byte_identical_across_threads() {
    let base = ["size", "--model", "sim", "--design", "exp-f1-homo", "--n", "200", "--reps", "24", "--tests", "psi"];
    let one = stdout(&[&base[..], &["--threads", "1"]].concat());
    let three = stdout(&[&base[..], &["--threads", "3"]].concat());
    let again = stdout(&[&base[..], &["--threads", "3"]].concat());
    assert_eq!(one, three);
    assert_eq!(three, again);
    assert!(one.starts_with("# {"));
    let other_seed = stdout(&[&base[..], &["--seed", "2"]].concat());
    assert_ne!(one, other_seed);
}

#[test]
fn iv_power_and_ci_are_deterministic() {
    let power = ["power", "--model", "iv", "--design", "d2-log-log-1", "--n", "200", "--reps", "16", "--grid", "-0.2,0.2,3"];
    assert_eq!(stdout(&[&power[..], &["--threads", "1"]].concat()), stdout(&[&power[..], &["--threads", "4"]].concat()));
    let ci = ["ci", "--model", "iv", "--design", "d2-log-log-1", "--n", "200", "--grid", "-0.5,0.5,41"];
    assert_eq!(stdout(&[&ci[..], &["--threads", "1"]].concat()), stdout(&[&ci[..], &["--threads", "2"]].concat()));
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("size.csv");
    let args = ["size", "--model", "iv", "--design", "d1-exp-exp-1", "--n", "200", "--reps", "8"];
    let printed = stdout(&args);
    stdout(&[&args[..], &["--out", p.to_str().unwrap()]].concat());
    assert_eq!(std::fs::read_to_string(&p).unwrap(), printed);
}

#[test]
fn size_csv_schema() {
    let csv = stdout(&["size", "--model", "iv", "--design", "d1-exp-exp-1", "--n", "200", "--reps", "8"]);
    let header = csv.lines().nth(1).unwrap();
    assert_eq!(header, "model,design,n,test,erf,mc_se,reps,seed,failures");
    let tests: Vec<String> = rows(&csv).into_iter().map(|r| r[3].clone()).collect();
    assert_eq!(tests, ["ar", "psi_k3"]);
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "model = iv\ndesign = d1-exp-exp-1\nn = 200\nreps = 8\n").unwrap();
    let from_file = stdout(&["size", "--config", cfg.to_str().unwrap()]);
    let direct = stdout(&["size", "--model", "iv", "--design", "d1-exp-exp-1", "--n", "200", "--reps", "8"]);
    assert_eq!(rows(&from_file), rows(&direct));
}

#[test]
fn usage_errors_exit_with_2() {
    for args in [
        &["size", "--reps", "0"][..],
        &["size", "--design", "nope"],
        &["size", "--alpha", "1.5"],
        &["bounds"],
        &["ci", "--model", "iv", "--design", "d2-exp-exp-1"],
        &["frobnicate"],
    ] {
        assert_eq!(calpha(args).status.code(), Some(2), "{args:?}");
    }
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn bad_data_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "y,x,z\n1,2,3\n4,oops,6\n");
    let out = calpha(&["test", "--model", "iv", "--data", &bad, "--map", "y=y,x=x,z2=z", "--intercept"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('x') && err.contains('2'), "{err}");
    let missing = calpha(&["test", "--model", "iv", "--data", &bad, "--map", "y=y,x=w,z2=z"]);
    assert_eq!(missing.status.code(), Some(3));
    let absent = calpha(&["test", "--model", "iv", "--data", "/nonexistent.csv", "--map", "y=y,x=x,z2=z"]);
    assert_eq!(absent.status.code(), Some(3));
}

#[test]
fn test_command_on_written_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = calpha_core::iv::IvDesign::parse("d2-log-log-1", 300).unwrap();
    let data = calpha_core::iv::simulate_iv(&d, 5);
    let path = dir.path().join("d.csv");
    let map = calpha_core::iv::write_csv(&data, &path).unwrap();
    let out_csv = dir.path().join("t.csv");
    let args = [
        "test", "--model", "iv", "--data", path.to_str().unwrap(), "--map", &map.to_spec(), "--theta0", "0",
        "--tests", "psi,ar", "--out", out_csv.to_str().unwrap(),
    ];
    let report = stdout(&args);
    assert!(report.contains("psi_k3") && report.contains("ar"));
    let csv = std::fs::read_to_string(&out_csv).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "test,theta0,statistic,rank,critical_value,p_value,reject,order");
    assert_eq!(rows(&csv).len(), 2);
}

fn column(csv: &str, idx: usize) -> Vec<f64> {
    rows(csv).iter().map(|r| r[idx].parse().unwrap()).collect()
}

#[test]
fn bounds_at_zero_noncentrality_equal_alpha() {
    let csv = stdout(&["bounds", "--r", "1,2,5", "--a", "0,10,11", "--alpha", "0.05"]);
    for r in rows(&csv) {
        if r[1] == "0" {
            assert!((r[3].parse::<f64>().unwrap() - 0.05).abs() < 1e-10, "{r:?}");
        }
    }
}

#[test]
fn rank_one_bound_matches_two_sided_bound() {
    for tau in [0.0, 0.5, 1.0, 1.96, 3.0] {
        let a = format!("{}", tau * tau);
        let env = column(&stdout(&["bounds", "--r", "1", "--a", &a]), 3)[0];
        let two = column(&stdout(&["bounds", "--info", "1", "--tau", &format!("{tau}")]), 3)[0];
        assert!((env - two).abs() < 1e-10, "tau {tau}: {env} vs {two}");
    }
}

#[test]
fn bounds_increase_in_noncentrality_and_fall_in_rank() {
    let csv = stdout(&["bounds", "--r", "1,3", "--a", "0,20,41"]);
    let p = column(&csv, 3);
    let (r1, r3) = p.split_at(41);
    assert!(r1.windows(2).all(|w| w[1] >= w[0]));
    assert!(r3.windows(2).all(|w| w[1] >= w[0]));
    assert!(r1.iter().zip(r3).skip(1).all(|(a, b)| a > b));
}
