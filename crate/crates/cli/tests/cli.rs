use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rmdp-synth"))
}

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &str = r#"{
  "system": {
    "dynamics": {
      "delta": 0.5, "alpha": [0.8, 0.9], "beta": [0.8, 0.9], "noise": 0.1,
      "steer": [-1.5707963267948966, 1.5707963267948966], "accel": [-5, 5], "speed": [-3, 3]
    },
    "true_params": { "alpha": 0.85, "beta": 0.85 }
  },
  "abstraction": {
    "domain": { "x": [0, 4], "y": [0, 3], "V": [0, 3] },
    "cells": { "x": 8, "y": 6, "theta": 9, "V": 3 },
    "action_grid": { "u": 3, "u'": 3 },
    "goal": [ { "x": [3, 4] } ],
    "unsafe": [ { "x": [1.5, 2], "y": [0, 1] } ],
    "initial_state": { "x": 1.75, "y": 1.75, "theta": 0.0, "V": 1.5 }
  },
  "solve": { "horizon": { "finite": 12 } },
  "simulate": { "runs": 300, "seed": 11, "record": 3 }
}"#;

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.json");
    std::fs::write(&path, SMALL).unwrap();
    path
}

#[test]
fn example_matches_bundled_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["example", "--out", p(dir.path())]);
    assert_eq!(code(&out), 0);
    for name in ["m1.json", "m2.json", "relation.json", "m2_flipped_label.json"] {
        let written = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let bundled = std::fs::read_to_string(data("alternating").join(name)).unwrap();
        assert_eq!(written, bundled, "{name} differs from the bundled copy");
    }
}

#[test]
fn check_pasr_exit_codes() {
    let m1 = data("alternating/m1.json");
    let rel = data("alternating/relation.json");
    let dir = tempfile::tempdir().unwrap();

    let ok = run(&["check-pasr", p(&m1), p(&data("alternating/m2.json")), p(&rel), "--out", p(dir.path())]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["holds"], true);
    let iface: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("interface.json")).unwrap()).unwrap();
    assert_eq!(iface.as_array().unwrap().len(), 8);
    assert_eq!(iface[0]["x1"], "x1");

    let flipped = run(&["check-pasr", p(&m1), p(&data("alternating/m2_flipped_label.json")), p(&rel)]);
    assert_eq!(code(&flipped), 1);
    let report: serde_json::Value = serde_json::from_slice(&flipped.stdout).unwrap();
    assert_eq!(report["failed_condition"], 3);
    assert_eq!(report["counterexample"]["names"], serde_json::json!(["r1", "r2"]));

    let missing = run(&["check-pasr", p(&m1), "/nonexistent.json", p(&rel)]);
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nonexistent"));
}

#[test]
fn pipeline_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = run(&["--threads", "1", "pipeline", "--config", p(&cfg), "--out", p(out)]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    }
    for name in ["abstraction.imdp", "abstraction.json", "solve.json", "stats.json", "trajectories.csv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert!(x == y, "{name} differs between identical runs");
    }

    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["runs"], 300);
    let rho = stats["rho_star"].as_f64().unwrap();
    let freq = stats["frequency"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rho));
    assert!(freq >= rho - stats["hoeffding_epsilon"].as_f64().unwrap());
    let counts: u64 = stats["outcome_counts"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(counts, 300);

    let traj = std::fs::read_to_string(a.join("trajectories.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next(), Some("run,k,x,y,theta,V,u,u',outcome"));
    let runs: std::collections::BTreeSet<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(runs.into_iter().collect::<Vec<_>>(), vec!["0", "1", "2"]);

    let other_seed = dir.path().join("c");
    let res = run(&["pipeline", "--config", p(&cfg), "--out", p(&other_seed), "--seed", "12"]);
    assert_eq!(code(&res), 0);
    let stats_c: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(other_seed.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats_c["seed"], 12);
}

#[test]
fn stages_run_separately() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let work = dir.path().join("w");

    let res = run(&["abstract", "--config", p(&cfg), "--out", p(&work), "--gzip"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let summary = String::from_utf8(res.stdout).unwrap();
    assert!(summary.starts_with("states=1297 "), "{summary}");
    assert!(String::from_utf8_lossy(&res.stderr).contains("abstraction built in"));

    let model = work.join("abstraction.imdp.gz");
    let res = run(&["--format", "csv", "solve", p(&model), "--config", p(&cfg), "--out", p(&work)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let values = std::fs::read_to_string(work.join("values.csv")).unwrap();
    assert_eq!(values.lines().next(), Some("state,value,action"));
    assert_eq!(values.lines().count(), 1298);

    let res = run(&["--quiet", "simulate", "--config", p(&cfg), "--input", p(&work), "--out", p(&work), "--runs", "50"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(res.stdout.is_empty());
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(work.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["runs"], 50);

    let res = run(&["solve", p(&model), "--horizon", "unbounded", "--out", p(&dir.path().join("u"))]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let solved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("u/solve.json")).unwrap()).unwrap();
    assert_eq!(solved["converged"], true);
    assert!(solved["policy"]["stationary"].is_array());
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, SMALL.replace("\"cells\"", "\"cell\"")).unwrap();
    let res = run(&["pipeline", "--config", p(&bad), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("cell"));

    let misaligned = dir.path().join("mis.json");
    std::fs::write(&misaligned, SMALL.replace("[1.5, 2]", "[1.6, 2]")).unwrap();
    let res = run(&["abstract", "--config", p(&misaligned), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("not aligned"));

    let res = run(&["solve", p(&bad), "--horizon", "soon", "--out", p(dir.path())]);
    assert_eq!(code(&res), 2);
}

#[test]
fn wide_parameter_box_is_vacuous_but_passes() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&["--quiet", "pipeline", "--config", p(&data("coarse_wide.json")), "--out", p(dir.path())]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("stats.json")).unwrap()).unwrap();
    assert!(stats["rho_star"].as_f64().unwrap() <= stats["frequency"].as_f64().unwrap() + 0.05);
}

#[test]
fn bundled_configs_parse() {
    let mut cells = Vec::new();
    for name in ["desk.json", "desk_fine.json", "coarse_wide.json"] {
        let cfg = rmdp_synth::config::PipelineConfig::load(&data(name)).unwrap();
        cells.push(cfg.abstraction.resolve(&cfg.system.dynamics).unwrap().grid.n_cells());
    }
    assert_eq!(cells[0] + 1, 3841);
}
