use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn quadsig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadsig"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, doc: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn signaling() -> Value {
    json!({
        "game": "signaling",
        "parameters": {"source_power": 1.0, "noise_power": 1.0, "lambda": 0.25, "bias": 0.1}
    })
}

#[test]
fn signaling_report_has_closed_form_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", &signaling());
    let out = quadsig(&["signaling", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let p = &v["result"]["policy"];
    for (k, want) in [("A", 1.0), ("K", 0.5), ("C", -0.2), ("L", 0.1)] {
        assert!((p[k].as_f64().unwrap() - want).abs() < 1e-12, "{k}");
    }
    let vals = &v["result"]["diagnostics"]["values"];
    assert!((vals["g_i"].as_f64().unwrap() - 1.27).abs() < 1e-12);
    assert!((vals["g_u"].as_f64().unwrap() - 2.01).abs() < 1e-12);
    assert_eq!(v["scenario"]["parameters"]["lambda"], 0.25);
    assert!(v["tool_version"].is_string());
}

#[test]
fn infeasible_cheap_talk_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &json!({
            "game": "cheap-talk",
            "parameters": {"source": {"kind": "uniform", "lo": 0.0, "hi": 1.0}, "bias": 0.3, "n_bins": 2}
        }),
    );
    let out = quadsig(&["cheap-talk", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"], "infeasible");
    assert!(v["result"].is_null());
}

#[test]
fn poa_sweep_csv_is_ordered_and_unique() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        &json!({
            "game": "poa",
            "parameters": {"source_power": 1.0, "noise_power": 1.0, "lambda": 0.5, "bias": 0.1},
            "sweep": {"parameter": "lambda", "start": 0.05, "stop": 0.95, "step": 0.05}
        }),
    );
    let csv_path = dir.path().join("poa.csv");
    let out = quadsig(&[
        "poa",
        "--config",
        &cfg,
        "--format",
        "csv",
        "--out",
        csv_path.to_str().unwrap(),
        "--jobs",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,g_i,g_u,t_i,t_u,poa"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 19);
    for w in rows.windows(2) {
        assert!(w[0][0] < w[1][0]);
    }
    for r in &rows {
        let (em, ew, lambda, b) = (1.0f64, 1.0f64, r[0], 0.1f64);
        let g_i = 3.0 * (lambda * em * ew).sqrt() + b * b * (em / (lambda * ew)).sqrt() - lambda * ew;
        assert!((r[1] - g_i).abs() < 1e-12);
        assert!((r[2] - (2.0 * em + b * b)).abs() < 1e-12);
        assert!(r[5] > 1.0);
    }
}

#[test]
fn jobs_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sim.json",
        &json!({
            "game": "simulate",
            "parameters": {"source_power": 1.0, "noise_power": 1.0, "lambda": 0.25, "bias": 0.1, "n_samples": 50000}
        }),
    );
    let a = quadsig(&["simulate", "--config", &cfg, "--jobs", "1", "--seed", "9"]);
    let b = quadsig(&["simulate", "--config", &cfg, "--jobs", "3", "--seed", "9"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["scenario"]["parameters"]["seed"], 9);
}

#[test]
fn overrides_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", &signaling());
    let out = quadsig(&["signaling", "--config", &cfg, "--set", "lambda=2"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["class"], "non-informative");

    let out = quadsig(&["signaling", "--config", &cfg, "--set", "lamda=2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));

    let out = quadsig(&["team", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n \"game\": \"signaling\",\n \"parameters\": {\n  \"lambda\": 0.2,,\n }\n}").unwrap();
    let out = quadsig(&["signaling", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json:4:"));

    let out = quadsig(&["signaling"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn report_round_trips_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", &signaling());
    let report = dir.path().join("r.json");
    let out = quadsig(&["signaling", "--config", &cfg, "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let first: quadsig::scenario::RunReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();

    // The embedded scenario reproduces the same report.
    let again = quadsig::scenario::execute(&first.scenario).unwrap();
    assert_eq!(again, first);
}

#[test]
fn reproduce_example_is_seed_independent() {
    let a = quadsig(&["reproduce-example", "--seed", "1"]);
    let b = quadsig(&["reproduce-example", "--seed", "77"]);
    assert_eq!(a.status.code(), Some(0));
    let (a, b): (Value, Value) = (
        serde_json::from_slice(&a.stdout).unwrap(),
        serde_json::from_slice(&b.stdout).unwrap(),
    );
    for p in a["printed"].as_array().unwrap() {
        assert!(p["residual"].as_f64().unwrap() < 5e-3);
        assert!(p["refined_residual"].as_f64().unwrap() < 1e-10);
        assert!(p["class_index"].is_u64());
    }
    let classes = |v: &Value| v["search"]["classes"].as_array().unwrap().len();
    assert_eq!(classes(&a), classes(&b));
    assert_eq!(classes(&a), 3);
}

#[test]
fn every_game_dispatches() {
    let dir = tempfile::tempdir().unwrap();
    let scalar = json!({"source_power": 2.0, "noise_power": 1.0, "lambda": 0.3, "bias": 0.2});
    let cases = [
        ("team", scalar.clone()),
        ("stackelberg", scalar.clone()),
        (
            "stackelberg",
            json!({"source": {"kind": "gaussian", "mean": 0.0, "variance": 1.0}, "bias": 0.1}),
        ),
        (
            "cheap-talk",
            json!({"source": {"kind": "gaussian", "mean": 0.0, "variance": 1.0}, "bias": 0.1}),
        ),
        (
            "cheap-talk-multi",
            json!({
                "sources": [{"kind": "uniform", "lo": 0.0, "hi": 1.0}, {"kind": "exponential", "rate": 1.0}],
                "bias": [0.05, 0.0],
                "bins": [3, "full"]
            }),
        ),
        (
            "signaling-multi",
            json!({"source_cov": [[2.0, 0.0], [0.0, 1.0]], "noise_cov": [[1.0, 0.0], [0.0, 1.0]], "lambda": 0.5, "n_starts": 20}),
        ),
    ];
    for (i, (game, params)) in cases.into_iter().enumerate() {
        let cfg = write(dir.path(), &format!("g{i}.json"), &json!({"game": game, "parameters": params}));
        let out = quadsig(&[game, "--config", &cfg]);
        assert_eq!(out.status.code(), Some(0), "{game}: {}", String::from_utf8_lossy(&out.stderr));
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v["result"]["costs"]["J_total"].is_number(), "{game}");
    }
}
