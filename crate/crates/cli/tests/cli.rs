use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viability")).args(args).output().expect("binary runs")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json report on stdout")
}

fn strip_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing_seconds");
    v
}

#[test]
fn check_binomial_is_viable() {
    let f = fixture("binomial.json");
    let o = run(&["check", "--market", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert_eq!(r["passed"], true);
    assert_eq!(r["result"]["verdict"], "NA");
    let o = run(&["check", "--market", fixture("binomial2.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn bundled_binomial_optimum() {
    let f = fixture("binomial.json");
    let o = run(&["optimize", "--market", f.to_str().unwrap(), "--utility", "log"]);
    let r = json(&o);
    let pi = r["result"]["solution"]["strategy"]["values"]["fractions"][0][0].as_f64().unwrap();
    assert!((pi - 0.5).abs() < 1e-8, "{pi}");
}

#[test]
fn bad_probability_exits_two_with_diagnostic() {
    let f = fixture("bad_prob.json");
    let o = run(&["check", "--market", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let r = json(&o);
    let err = r["error"].as_str().unwrap();
    assert!(err.contains("node 1") && err.contains("1.2"), "{err}");
}

#[test]
fn missing_file_and_bad_flags_exit_two() {
    assert_eq!(run(&["check", "--market", "/nonexistent/market.json"]).status.code(), Some(2));
    assert_eq!(run(&["check"]).status.code(), Some(2));
    let f = fixture("binomial.json");
    assert_eq!(run(&["optimize", "--market", f.to_str().unwrap(), "--utility", "crra:-1"]).status.code(), Some(2));
    assert_eq!(run(&["--tol-eq", "0", "check", "--market", f.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn arbitrage_market_reports_replayed_certificate() {
    let f = fixture("arbitrage.json");
    let o = run(&["check", "--market", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert_eq!(r["result"]["verdict"], "ARBITRAGE");
    let o = run(&["optimize", "--market", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["result"]["outcome"], "no-solution");
}

#[test]
fn every_market_subcommand_passes_on_binomial() {
    let f = fixture("binomial.json");
    let m = f.to_str().unwrap();
    for args in [
        vec!["numeraire", "--market", m, "--n-tests", "200"],
        vec!["optimize", "--market", m, "--utility", "log"],
        vec!["optimize", "--market", m, "--utility", "crra:0.5", "--measure", "emm"],
        vec!["measure", "--market", m, "--epsilon", "0.01"],
        vec!["entropy", "--market", m],
        vec!["entropy", "--market", m, "--exp-utility"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stdout));
    }
}

#[test]
fn hellinger_report_from_density_file() {
    let dir = tempfile::tempdir().unwrap();
    let z = dir.path().join("z.json");
    // martingale density of the binomial fixture: q = 1/3 up at each step
    let (u, d) = (2.0 / 3.0, 4.0 / 3.0);
    std::fs::write(&z, format!("{{\"z\": [1, {u}, {d}, {}, {}, {}, {}]}}", u * u, u * d, d * u, d * d)).unwrap();
    let f = fixture("binomial2.json");
    let o = run(&["entropy", "--market", f.to_str().unwrap(), "--hellinger", z.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(json(&o)["result"]["martingale"], true);
}

#[test]
fn equivalence_suite_agrees() {
    let o = run(&["equivalence-suite", "--n-markets", "100"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(json(&o)["result"]["disagreements"].as_array().unwrap().is_empty());
    assert_eq!(run(&["equivalence-suite", "--d-min", "3", "--d-max", "2"]).status.code(), Some(2));
}

#[test]
fn reports_are_deterministic_modulo_timing() {
    let args = ["--seed", "11", "simulate", "--paths", "400", "--steps", "100", "--strategies", "5"];
    let a = strip_timing(json(&run(&args)));
    let b = strip_timing(json(&run(&args)));
    assert_eq!(a, b);
    let args = ["--seed", "5", "equivalence-suite", "--n-markets", "40"];
    assert_eq!(strip_timing(json(&run(&args))), strip_timing(json(&run(&args))));
}

#[test]
fn report_file_and_side_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.json");
    let o = run(&["simulate", "--paths", "300", "--steps", "100", "--strategies", "3", "--out", out.to_str().unwrap()]);
    assert!(o.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["command"], "simulate");
    let stopped = std::fs::read_to_string(dir.path().join("sim.stopped.csv")).unwrap();
    assert!(stopped.starts_with("level,mean,std_error,stopped_fraction"));
    assert_eq!(stopped.lines().count(), 7);
    // only the report and its tables, no leftover temporaries
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 3);
}

#[test]
fn csv_and_text_formats() {
    let f = fixture("binomial.json");
    let o = run(&["--format", "csv", "check", "--market", f.to_str().unwrap()]);
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.starts_with("check,passed,detail\n"));
    let o = run(&["--format", "text", "check", "--market", f.to_str().unwrap()]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("overall: PASS"));
}
