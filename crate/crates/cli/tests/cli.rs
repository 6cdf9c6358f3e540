use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn kolmo() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_kolmo"));
    c.env_remove("KOLMO_OUTPUT_DIR");
    c
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    kolmo().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

const PRICE: [&str; 17] = [
    "price", "--model", "bs-asian", "--sigma", "0.3", "--payoff", "fixed-call", "--strike", "1", "--s0", "1", "--a0", "0", "--T",
    "0.25", "--N", "2",
];

#[test]
fn price_record_has_the_stable_fields() {
    let out = run(&PRICE);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    for key in ["model", "payoff", "t", "T", "x", "N", "values", "greeks", "slopes", "pass"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert!(r["slopes"].is_null());
    assert_eq!(r["N"], 2);
    let values: Vec<f64> = r["values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(values.len(), 3);
    let u: f64 = values.iter().sum();
    assert!((r["U"].as_f64().unwrap() - u).abs() < 1e-15);
    // ATM, first-order term vanishes
    assert_eq!(values[1], 0.0);
    // library value, computed independently of the CLI
    let m = kolmo::PolynomialModel::black_scholes_asian(0.3);
    let p = kolmo::payoff::Payoff::fixed_strike_asian(1.0, 0.25).unwrap();
    let lib = kolmo::pricer::price(&m, &p, 0.0, 0.25, &[1.0, 0.0], 2, &Default::default(), &[]).unwrap();
    assert_eq!(lib.value(), r["U"].as_f64().unwrap());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"sigma\": 2.9999999999999999e-1"));
}

#[test]
fn missing_strike_names_the_field() {
    let args = ["price", "--model", "bs-asian", "--sigma", "0.3", "--payoff", "fixed-call", "--s0", "1", "--a0", "0", "--T", "0.25", "--N", "2"];
    let out = run(&args);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("payoff.strike") && err.contains("--strike"), "{err}");
}

#[test]
fn csv_rows_per_order() {
    let mut args = PRICE.to_vec();
    args.extend(["--format", "csv"]);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.split('\n').collect();
    assert_eq!(lines[0], "order,value,cumulative");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,"));
    assert_eq!(lines[4], "");
    assert!(!text.contains('\r'));
}

#[test]
fn config_file_and_overrides() {
    let cfg = configs().join("price_prototype.toml");
    let a = run(&["price", "-c", cfg.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, run(&PRICE.iter().copied().chain(["--greek", "1,0", "--greek", "2,0"]).collect::<Vec<_>>()).stdout);
    let r = json(&a);
    assert_eq!(r["greeks"].as_object().unwrap().len(), 2);
    let b = run(&["price", "-c", cfg.to_str().unwrap(), "--sigma", "0.4", "--N", "1"]);
    let rb = json(&b);
    assert_eq!(rb["N"], 1);
    assert_eq!(rb["model"]["sigma"].as_f64(), Some(0.4));
}

#[test]
fn output_is_byte_identical_across_runs() {
    let cfg = configs().join("converge_fixed_maturity.toml");
    let a = run(&["converge", "-c", cfg.to_str().unwrap()]);
    let b = run(&["converge", "-c", cfg.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let r = json(&a);
    assert_eq!(r["pass"], true);
    let slopes: Vec<f64> = r["slopes"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (s, want) in slopes.iter().zip([2.0, 2.5, 3.0]) {
        assert!((s - want).abs() < 0.05, "{s} vs {want}");
    }
}

#[test]
fn env_var_sets_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = kolmo().args(PRICE).env("KOLMO_OUTPUT_DIR", dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let file = dir.path().join("price.json");
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!(r["command"], "price");
    let out = kolmo().args(PRICE).args(["-o", "sub/p.csv", "--format", "csv"]).env("KOLMO_OUTPUT_DIR", dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(std::fs::read_to_string(dir.path().join("sub/p.csv")).unwrap().starts_with("order,value,cumulative\n"));
}

#[test]
fn constant_model_is_exact() {
    let cfg = configs().join("constant_chain.toml");
    let out = run(&["converge", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    for c in r["checks"].as_array().unwrap() {
        assert_eq!(c["status"], "exact");
    }
    assert!(r["slopes"].as_array().unwrap().iter().all(Value::is_null));
}

#[test]
fn failing_slopes_exit_four() {
    // far too few paths: nothing rises above the noise for a model that is not exact
    let out = run(&[
        "converge", "--model", "bs-asian", "--sigma", "0.3", "--payoff", "fixed-call", "--strike", "1", "--x", "1,0", "--maturities",
        "0.25,0.125,0.0625,0.03125", "--orders", "2", "--paths", "2000", "--steps", "200",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert_eq!(r["pass"], false);
    assert_eq!(r["checks"][0]["status"], "noise-dominated");
}

#[test]
fn numerical_flags_exit_three() {
    let out = run(&["price", "--model", "cev-asian", "--sigma", "0.3", "--gamma", "0.5", "--payoff", "fixed-call", "--strike", "1", "--x", "-1,0", "--T", "0.25"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert_eq!(r["pass"], false);
    assert_eq!(r["diagnostics"]["outside_domain"], true);
}

#[test]
fn config_errors_exit_two() {
    for args in [
        vec!["price", "--model", "heston", "--sigma", "0.3", "--payoff", "fixed-call", "--strike", "1", "--x", "1,0", "--T", "1"],
        vec!["price", "--model", "bs-asian", "--sigma", "0.3", "--payoff", "fixed-call", "--strike", "1", "--x", "1,0,0", "--T", "1"],
        vec!["price", "--model", "bs-asian", "--sigma", "0.3", "--payoff", "fixed-call", "--strike", "1", "--x", "1,0"],
        vec!["converge", "--model", "bs-asian", "--sigma", "0.3", "--payoff", "fixed-call", "--strike", "1", "--x", "1,0", "--maturities", "0.1,0.2,0.2,0.3"],
        vec!["converge", "--model", "bs-asian", "--sigma", "0.3", "--payoff", "fixed-call", "--strike", "1", "--x", "1,0", "--maturities", "0.1,0.2"],
        vec!["price", "--model", "bs-asian", "--sigma", "0.3", "--payoff", "fixed-call", "--strike", "1", "--x", "1,0", "--T", "1", "--greek", "1;0"],
        vec!["price", "-c", "/nonexistent/config.toml"],
        vec!["verify", "spectral"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn verify_suites() {
    let out = run(&["verify", "geometry"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS geometry/")));
    let out = run(&["verify", "kernel", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    for c in r["checks"].as_array().unwrap() {
        assert_eq!(c["pass"], true);
        if c["name"] == "gradient-symmetry" || c["name"] == "shift-identity" {
            assert!(c["residual"].as_f64().unwrap() < 1e-8);
        }
    }
}

#[test]
fn monte_carlo_subcommand() {
    let out = run(&[
        "mc", "--model", "bs-asian", "--sigma", "0.3", "--payoff", "fixed-call", "--strike", "1", "--x", "1,0", "--T", "0.25", "--paths",
        "20000", "--steps", "400", "--seed", "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    let mean = r["mc"]["mean"].as_f64().unwrap();
    let se = r["mc"]["stderr"].as_f64().unwrap();
    assert_eq!(r["values"][0].as_f64().unwrap(), mean);
    assert!((mean - 0.03453).abs() < 5.0 * se + 1e-4, "{mean} ± {se}");
    assert_eq!(r["mc"]["steps"], 100);
}
