use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cranopt::harness::{ExperimentConfig, ModeName};

fn cranopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cranopt")).args(args).output().expect("run cranopt")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// One mode, one λ, one slot.
fn tiny_config(dir: &Path) -> String {
    let mut config = ExperimentConfig::desk();
    config.modes = vec![ModeName::None];
    config.lambdas = vec![0.999];
    config.slots = 1;
    let path = dir.join("tiny.json");
    fs::write(&path, config.to_json().unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn help_lists_subcommands() {
    let text = stdout(&cranopt(&["--help"]));
    for cmd in ["generate", "solve", "sweep", "gains", "validate", "conic"] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
}

#[test]
fn generate_round_trips_and_respects_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    stdout(&cranopt(&["generate", "--mode", "uncoded", "--cache-size", "6", "--seed", "5", "--out", out]));
    let text = fs::read_to_string(dir.path().join("scenario.json")).unwrap();
    let scenario = cranopt::Scenario::from_json(&text).unwrap();
    assert_eq!(scenario.slots.len(), ExperimentConfig::desk().slots);

    let again = stdout(&cranopt(&["generate", "--mode", "uncoded", "--cache-size", "6", "--seed", "5"]));
    assert_eq!(again, text);
    let other = stdout(&cranopt(&["generate", "--mode", "uncoded", "--cache-size", "6", "--seed", "6"]));
    assert_ne!(other, text);
}

#[test]
fn invalid_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"slots": 0}"#).unwrap();
    let out = cranopt(&["--config", bad.to_str().unwrap(), "sweep"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("slots"));

    fs::write(&bad, "not json").unwrap();
    assert!(!cranopt(&["--config", bad.to_str().unwrap(), "generate"]).status.success());
    assert!(!cranopt(&["--config", "/nonexistent/cfg.json", "generate"]).status.success());
    assert!(!cranopt(&["--preset", "huge", "generate"]).status.success());
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = dir.path().join("out");
    stdout(&cranopt(&["--config", &config, "--out", out.to_str().unwrap(), "sweep"]));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("mode,S,lambda,power_cost,backhaul_cost,infeasible,slots"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..3], ["none", "0", "0.999"]);
    assert_eq!(row[5], "0");
    assert_eq!(row[6], "1");
    assert!(lines.next().is_none());
}

#[test]
fn gains_from_records() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    fs::write(
        &csv,
        "mode,S,lambda,power_cost,backhaul_cost,infeasible,slots\n\
         none,0,0.999,50,40,0,10\n\
         uncoded,3,0.999,60,20,0,10\n\
         coded,3,0.999,70,10,0,10\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    stdout(&cranopt(&["--out", out.to_str().unwrap(), "gains", "--records", csv.to_str().unwrap()]));
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("gains.json")).unwrap()).unwrap();
    let row = &rows[0];
    assert_eq!(row["cache_size"], 3);
    assert!((row["coded_vs_none"].as_f64().unwrap() - 75.0).abs() < 1e-12);
    assert!((row["uncoded_vs_none"].as_f64().unwrap() - 50.0).abs() < 1e-12);
    assert!((row["coded_vs_uncoded"].as_f64().unwrap() - 50.0).abs() < 1e-12);
    assert!(out.join("gains.txt").exists());

    fs::write(&csv, "mode,S\nnone,0\n").unwrap();
    assert!(!cranopt(&["gains", "--records", csv.to_str().unwrap()]).status.success());
}

#[test]
fn solve_reports_one_slot() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let text = stdout(&cranopt(&["--config", &config, "solve", "--mode", "none", "--lambda", "0.999"]));
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["mode"], "none");
    assert_eq!(report["relaxation_status"], "Converged");
    assert_eq!(report["rounding"]["sinr_ok"], true);
}

#[test]
fn conic_dump_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    stdout(&cranopt(&["--out", out, "conic", "dump", "--mode", "none"]));
    let problem = dir.path().join("problem.json");
    let sol: serde_json::Value =
        serde_json::from_str(&stdout(&cranopt(&["conic", "solve", problem.to_str().unwrap()]))).unwrap();
    assert_eq!(sol["status"], "Optimal");
}

#[test]
fn quick_validation_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = cranopt(&["--out", out, "validate", "--quick"]);
    stdout(&run);
    let text = fs::read_to_string(dir.path().join("validation.txt")).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 20);
    assert!(text.ends_with(" 0 failed\n"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("validation.json")).unwrap()).unwrap();
    assert!(json.as_array().unwrap().iter().all(|r| r["passed"] == true));
}
