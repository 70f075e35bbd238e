use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const QUOTE: &str = r#"{
  "market": {"spot": 100.0, "sigma0": 0.2},
  "options": [{"strike": 90.0, "maturity": 1.0}, {"strike": 110.0, "maturity": 0.5}],
  "uncertainty": {"kind": "total_vol", "gamma": 0.02, "bias": 0.005, "epsilon": 1e-4},
  "policy": {"alpha": 0.05, "quantile_mode": "gaussian"}
}"#;

const SMILE: &str = r#"{
  "market": {"spot": 100.0, "sigma0": 0.2},
  "uncertainty": {"kind": "atm_neutral", "gamma": 0.01, "epsilon": 1e-3},
  "smile": {"strikes": [90, 94, 96, 98, 100, 102, 104, 106, 110], "maturities": [0.25, 1.0]}
}"#;

const VALIDATE_CERTAIN: &str = r#"{
  "model": {
    "x0": 100.0,
    "basis": {"components": [
      {"function": {"kind": "constant", "value": 1.0},
       "coefficient": {"value": 0.2, "gamma": 0.0, "bias": 0.0, "epsilon": 1e-4}}
    ]}
  },
  "option": {"payoff": {"kind": "call", "strike": 100.0}, "maturity": 1.0},
  "simulation": {"n_paths": 64, "n_steps": 8, "seed": 1, "scheme": "exact_lognormal"},
  "validation": {"n_outer": 1000}
}"#;

const SIMULATE: &str = r#"{
  "model": {
    "x0": 100.0,
    "basis": {"components": [
      {"function": {"kind": "constant", "value": 1.0},
       "coefficient": {"value": 0.2, "gamma": 0.01, "bias": 0.0, "epsilon": 1e-4}}
    ]},
    "estimated_coefficients": [0.21]
  },
  "option": {"payoff": {"kind": "call", "strike": 100.0}, "maturity": 1.0},
  "simulation": {"n_paths": 500, "n_steps": 32, "seed": 17, "scheme": "exact_lognormal"}
}"#;

fn uvol(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    std::fs::create_dir_all(&out).unwrap();
    Command::new(env!("CARGO_BIN_EXE_uvol"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap()
}

fn artifact(dir: &Path, name: &str) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("out").join(name)).unwrap()).unwrap()
}

fn first_line(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn quote_writes_triples() {
    let dir = tempfile::tempdir().unwrap();
    let out = uvol(dir.path(), &["quote"], QUOTE);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = artifact(dir.path(), "quote.json");
    assert_eq!(doc["command"], "quote");
    let rows = doc["result"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let q = &rows[1];
    assert!((q["mid"].as_f64().unwrap() - 2.2113686999585814).abs() < 1e-12);
    assert!((q["ask"].as_f64().unwrap() - 2.2887318812330445).abs() < 1e-12);
    assert!(dir.path().join("out/resolved_config.json").exists());
}

#[test]
fn zero_epsilon_quotes_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = QUOTE.replace("\"epsilon\": 1e-4", "\"epsilon\": 0.0");
    let out = uvol(dir.path(), &["quote"], &cfg);
    assert_eq!(out.status.code(), Some(0));
    for q in artifact(dir.path(), "quote.json")["result"].as_array().unwrap() {
        assert_eq!(q["bid"], q["fair"]);
        assert_eq!(q["mid"], q["fair"]);
        assert_eq!(q["ask"], q["fair"]);
    }
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let out = uvol(dir.path(), &["quote"], "{\n  \"market\": {\"spot\": 100.0,,}\n}");
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("column"), "{err}");
}

#[test]
fn unknown_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = QUOTE.replace("\"sigma0\"", "\"sigma_zero\"");
    assert_eq!(uvol(dir.path(), &["quote"], &cfg).status.code(), Some(2));
}

#[test]
fn missing_section_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = uvol(dir.path(), &["smile"], QUOTE);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("smile"));
}

#[test]
fn domain_violation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = QUOTE.replace("\"sigma0\": 0.2", "\"sigma0\": -0.2");
    let out = uvol(dir.path(), &["quote"], &cfg);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn csv_headers() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(uvol(dir.path(), &["quote", "--format", "csv"], QUOTE).status.code(), Some(0));
    assert_eq!(
        first_line(dir.path(), "quotes.csv"),
        "strike,maturity,fair,bias_component,spread_component,bid,mid,ask"
    );
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(uvol(dir.path(), &["smile", "--format", "csv"], SMILE).status.code(), Some(0));
    assert_eq!(first_line(dir.path(), "smile.csv"), "maturity,strike,bid_vol,mid_vol,ask_vol");
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(uvol(dir.path(), &["simulate", "--format", "csv"], SIMULATE).status.code(), Some(0));
    assert_eq!(first_line(dir.path(), "pnl_paths.csv"), "path,terminal,gain,pnl");
}

#[test]
fn smile_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = uvol(dir.path(), &["smile"], SMILE);
    assert_eq!(out.status.code(), Some(0));
    let doc = artifact(dir.path(), "smile.json");
    let diag = &doc["result"]["diagnostics"];
    assert_eq!(diag["verdict"], "convex_decreasing_in_maturity", "{diag}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("convex"));
}

#[test]
fn validate_without_uncertainty_passes_with_zero_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let out = uvol(dir.path(), &["validate"], VALIDATE_CERTAIN);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = artifact(dir.path(), "validate.json");
    assert_eq!(doc["result"]["law"]["bias"]["value"], 0.0);
    assert_eq!(doc["result"]["report"]["bias"]["empirical"], 0.0);
    assert_eq!(doc["result"]["report"]["variance"]["empirical"], 0.0);
    assert_eq!(doc["result"]["report"]["pass"], true);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(uvol(dir.path(), &["simulate", "--seed", "99"], SIMULATE).status.code(), Some(0));
    let resolved = artifact(dir.path(), "resolved_config.json");
    assert_eq!(resolved["simulation"]["seed"], 99);
    let a = artifact(dir.path(), "simulate.json");

    let other = tempfile::tempdir().unwrap();
    let cfg = SIMULATE.replace("\"seed\": 17", "\"seed\": 99");
    assert_eq!(uvol(other.path(), &["simulate"], &cfg).status.code(), Some(0));
    assert_eq!(a["result"], artifact(other.path(), "simulate.json")["result"]);
}

#[test]
fn reruns_are_byte_identical() {
    let runs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let dir = tempfile::tempdir().unwrap();
            let workers = if i == 0 { "1" } else { "2" };
            let out = uvol(dir.path(), &["simulate", "--workers", workers], SIMULATE);
            assert_eq!(out.status.code(), Some(0));
            std::fs::read(dir.path().join("out/simulate.json")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn resolved_config_echoes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(uvol(dir.path(), &["estimate-law"], SIMULATE).status.code(), Some(0));
    let resolved = artifact(dir.path(), "resolved_config.json");
    assert_eq!(resolved["command"], "estimate-law");
    assert_eq!(resolved["test_function"]["h1"], 1.0);
    assert!(resolved["law"]["relative_bump"].is_number());
    assert!(resolved["pricer"]["kind"].is_string());
    // The resolved file is itself a valid config for the same command.
    let again = tempfile::tempdir().unwrap();
    let text = serde_json::to_string(&resolved).unwrap();
    assert_eq!(uvol(again.path(), &["estimate-law"], &text).status.code(), Some(0));
    assert_eq!(
        std::fs::read(dir.path().join("out/estimate-law.json")).unwrap(),
        std::fs::read(again.path().join("out/estimate-law.json")).unwrap()
    );
}
