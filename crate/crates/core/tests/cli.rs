mod common;

use std::path::Path;
use std::process::Command;

use tsdr_mpc::cli::{main_with, EXIT_CONFIG, EXIT_OK, EXIT_STRUCTURAL};

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let argv = std::iter::once("tsdr".to_string()).chain(args.iter().map(|s| s.to_string()));
    let code = main_with(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn bytes(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn simulate_then_audit_and_replay_from_the_echo() {
    let tmp = tempfile::tempdir().unwrap();
    let out1 = tmp.path().join("first");
    let out2 = tmp.path().join("second");
    let o1 = out1.to_str().unwrap();
    let (code, text) = run(&["simulate", "--config", common::CONFIG, "--scenario", "a", "--runs", "2", "--steps", "12", "--seed", "9", "--out", o1]);
    assert_eq!(code, EXIT_OK, "{text}");
    assert!(text.contains("scenario a"));
    let dir1 = out1.join("a");
    for f in ["config_echo.toml", "aggregate.csv", "run_000.csv", "run_001.csv"] {
        assert!(dir1.join(f).exists(), "{f} missing");
    }

    let (code, text) = run(&["audit", dir1.to_str().unwrap(), "--json"]);
    assert_eq!(code, EXIT_OK, "{text}");
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["runs"], 2);
    assert_eq!(v["summary"]["flagged"], 0);
    assert!(dir1.join("audit.csv").exists());

    // the echo alone reproduces the logs byte for byte
    let echo = dir1.join("config_echo.toml");
    let (code, _) = run(&["simulate", "--config", echo.to_str().unwrap(), "--scenario", "a", "--out", out2.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let dir2 = out2.join("a");
    for f in ["run_000.csv", "run_001.csv", "run_000_plan.csv", "aggregate.csv"] {
        assert_eq!(bytes(&dir1.join(f)), bytes(&dir2.join(f)), "{f} differs");
    }
}

#[test]
fn bounds_report_and_config_round_trip() {
    let (code, text) = run(&["bounds", "--config", common::CONFIG, "--scenario", "a", "--json"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["observability_rank"], 2);
    let total = v["bound"]["total"].as_f64().unwrap();
    assert!(total > 0.0 && total.is_finite());
    assert!((v["moments"]["mean"].as_f64().unwrap() - 0.3447).abs() < 1e-3);
    let (_, text) = run(&["bounds", "--config", common::CONFIG, "--scenario", "nominal", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v["bound"]["total"].as_f64().unwrap() > 0.0);
}

#[test]
fn solve_at_a_given_state() {
    let (code, text) = run(&["solve", "--config", common::CONFIG, "--json"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!((v["objective"].as_f64().unwrap() - 210.6478).abs() < 1e-3);
    let (code, text) = run(&["solve", "--config", common::CONFIG, "--state", "0,0", "--json"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["terminal_active"], true);
    assert_eq!(run(&["solve", "--config", common::CONFIG, "--state", "1,x"]).0, EXIT_CONFIG);
    assert_eq!(run(&["solve", "--config", common::CONFIG, "--state", "1,2,3"]).0, EXIT_CONFIG);
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["simulate"]).0, EXIT_CONFIG);
    assert_eq!(run(&["simulate", "--config", "/nonexistent.toml"]).0, EXIT_CONFIG);
    assert_eq!(run(&["simulate", "--config", common::CONFIG, "--scenario", "z"]).0, EXIT_CONFIG);
    assert_eq!(run(&["simulate", "--bogus"]).0, EXIT_CONFIG);
    assert_eq!(run(&["--help"]).0, EXIT_OK);

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[plant]\na = 1\n").unwrap();
    assert_eq!(run(&["bounds", "--config", bad.to_str().unwrap()]).0, EXIT_CONFIG);

    // empty log directory, with and without a config
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(run(&["audit", empty.to_str().unwrap()]).0, EXIT_CONFIG);
    assert_eq!(run(&["audit", empty.to_str().unwrap(), "--config", common::CONFIG]).0, EXIT_CONFIG);
    assert_eq!(run(&["audit", tmp.path().join("missing").to_str().unwrap()]).0, EXIT_CONFIG);
}

#[test]
fn structural_failures_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(common::CONFIG).unwrap();
    let low = tmp.path().join("low_lc.toml");
    std::fs::write(&low, text.replace("l_c = 2.0", "l_c = 0.001")).unwrap();
    assert_eq!(run(&["bounds", "--config", low.to_str().unwrap()]).0, EXIT_STRUCTURAL);
    let blind = tmp.path().join("blind.toml");
    std::fs::write(&blind, text.replace("f0 = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]", "f0 = [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]")).unwrap();
    assert_eq!(run(&["solve", "--config", blind.to_str().unwrap()]).0, EXIT_STRUCTURAL);
}

#[test]
fn tampered_logs_fail_the_audit() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(run(&["simulate", "--config", common::CONFIG, "--scenario", "a", "--runs", "1", "--steps", "10", "--out", out]).0, EXIT_OK);
    let run0 = tmp.path().join("a").join("run_000.csv");
    let text = std::fs::read_to_string(&run0).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // shift the first state coordinate of step 4
    let mut cells: Vec<String> = lines[5].split(',').map(String::from).collect();
    let x0: f64 = cells[1].parse().unwrap();
    cells[1] = format!("{}", x0 + 0.01);
    lines[5] = cells.join(",");
    std::fs::write(&run0, lines.join("\n") + "\n").unwrap();
    let (code, text) = run(&["audit", "--scenario", "a", "--out", out]);
    assert_eq!(code, EXIT_STRUCTURAL, "{text}");
}

#[test]
fn binary_reports_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_tsdr");
    let st = Command::new(exe).args(["bounds", "--config", common::CONFIG]).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&st.stdout).contains("sigma_bar"));
    let st = Command::new(exe).args(["bounds"]).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}
