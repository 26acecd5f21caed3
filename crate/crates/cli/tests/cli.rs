use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use stablim_cli::{ExperimentConfig, RunReport};

fn stablim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stablim")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const CAUCHY: &str = r#"{"schema": "stablim.experiment/1", "seed": 42, "n_paths": 20000,
    "experiment": {"kind": "sample-law", "law": {"law": "cauchy", "dim": 2}}}"#;

#[test]
fn passing_run_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CAUCHY);
    let out = dir.path().join("out");
    let o = stablim(&["sample-law", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS ecf_vs_cf"));
    let report = RunReport::load(&out.join("report.json")).unwrap();
    assert!(report.pass);
    assert_eq!(report.config.workers, 3);
    assert_eq!(report.artifacts, vec!["ecf.csv".to_string()]);
    let csv = fs::read_to_string(out.join("ecf.csv")).unwrap();
    assert!(csv.starts_with("theta_1,theta_2,re,im,radius,n_samples"));
    assert_eq!(csv.lines().count(), 62);
    let leftovers: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".incomplete"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn replay_matches_and_detects_seed_change() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CAUCHY);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(stablim(&["sample-law", "--config", &cfg, "--out", out]).status.code(), Some(0));
    let same = stablim(&["replay", out, "--workers", "8"]);
    assert_eq!(same.status.code(), Some(0), "{}", String::from_utf8_lossy(&same.stderr));
    let changed = stablim(&["replay", out, "--seed", "43"]);
    assert_eq!(changed.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&changed.stderr).contains("reproducibility failure: statistic"));
}

#[test]
fn verdict_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "lemma.json",
        r#"{"schema": "stablim.experiment/1", "seed": 1, "n_paths": 200,
            "experiment": {"kind": "lemma", "p": {"dim": 1, "rows": [[0.5]]},
                           "law": {"law": "normal", "cov": {"dim": 1, "rows": [[1.0]]}},
                           "horizon": 2, "last_term_tolerance": 1e-6}}"#,
    );
    let o = stablim(&["lemma", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL max_last_term_norm"));
}

#[test]
fn hypothesis_violation_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"schema": "stablim.experiment/1", "seed": 1, "n_paths": 10,
            "experiment": {"kind": "verify-stable", "n": 5,
              "process": {"variant": "synthetic_canonical", "p": {"dim": 1, "rows": [[1.5]]},
                          "mu": {"law": "cauchy", "dim": 1}}}}"#,
    );
    let o = stablim(&["verify-stable", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hypothesis violated"));
}

#[test]
fn config_errors_name_the_field() {
    let unknown = CAUCHY.replace("\"n_paths\"", "\"extra\": 1, \"n_paths\"");
    let err = ExperimentConfig::from_json(&unknown).unwrap_err().to_string();
    assert!(err.contains("unknown field `extra`"), "{err}");

    let no_seed = CAUCHY.replace("\"seed\": 42,", "");
    let err = ExperimentConfig::from_json(&no_seed).unwrap_err().to_string();
    assert!(err.contains("missing field `seed`"), "{err}");

    let nested = CAUCHY.replace("\"dim\": 2", "\"dim\": 2, \"scale\": 1");
    let err = ExperimentConfig::from_json(&nested).unwrap_err().to_string();
    assert!(err.contains("experiment"), "{err}");

    let zero = CAUCHY.replace("20000", "0");
    let err = ExperimentConfig::from_json(&zero).unwrap_err().to_string();
    assert!(err.contains("n_paths"), "{err}");

    let schema = CAUCHY.replace("experiment/1", "experiment/9");
    assert!(ExperimentConfig::from_json(&schema).is_err());

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "u.json", &unknown);
    assert_eq!(stablim(&["sample-law", "--config", &cfg]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "c.json", CAUCHY);
    assert_eq!(stablim(&["series", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn config_round_trips_through_the_report() {
    let config = ExperimentConfig::from_json(CAUCHY).unwrap();
    let text = serde_json::to_string(&config).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), config);
}

#[test]
fn simulate_writes_leading_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        r#"{"schema": "stablim.experiment/1", "seed": 3, "n_paths": 500,
            "experiment": {"kind": "simulate", "n": 6, "csv_paths": 4,
              "process": {"variant": "random_scaled", "p": {"dim": 1, "rows": [[0.5]]},
                          "mu": {"law": "cauchy", "dim": 1},
                          "lambda": {"values": [1.0, 2.0], "probs": [0.5, 0.5]}, "event_g": [2.0]}}}"#,
    );
    let out = dir.path().join("o");
    let o = stablim(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("paths.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("path_id,n,u_1,in_G,lambda,s_index"));
    assert_eq!(csv.lines().count(), 1 + 4 * 7);
}

#[test]
fn overflowing_horizon_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "big.json",
        r#"{"schema": "stablim.experiment/1", "seed": 3, "n_paths": 5,
            "experiment": {"kind": "simulate", "n": 2000,
              "process": {"variant": "synthetic_canonical", "p": {"dim": 1, "rows": [[0.5]]},
                          "mu": {"law": "cauchy", "dim": 1}}}}"#,
    );
    let o = stablim(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("maximum supported n is"));
}
