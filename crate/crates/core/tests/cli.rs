//! Command-line behaviour: exit codes, artifacts and resume.

use lcflow::config::RunConfig;
use lcflow::Mode;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
mode = "zero"
[grid]
m_2d = 32
[bvp1d]
m = 256
[strip2d]
hx = 0.0625
[continuation]
l_schedule = [2.0, 4.0]
tol_cont = 1e-2
common_window = 1.0
end_margin = 1.0
[witness.search]
end_margin = 1.0
"#;

fn lcflow(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcflow"))
        .args(args)
        .env("LCFLOW_OUT", out)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (file, mode) in [("ramp.toml", Mode::Ramp), ("zero.toml", Mode::Zero)] {
        let cfg = RunConfig::load(&root.join(file)).unwrap();
        assert_eq!(cfg.mode, mode);
        assert_eq!(cfg.continuation.l_schedule, vec![4.0, 8.0, 16.0]);
    }
}

#[test]
fn run_writes_every_artifact_and_verify_reports_failed_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let o = lcflow(&["--config", cfg.to_str().unwrap(), "run"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&o);
    assert!(report["error"].is_null());
    for f in [
        "bvp1d.json",
        "lambda_scan.csv",
        "phibar.csv",
        "pair.json",
        "field.csv",
        "field.meta.json",
        "continuation.json",
        "flow.csv",
        "flow_report.json",
        "witness.json",
        "level_curves.csv",
        "level_curves.svg",
        "streamlines.csv",
        "streamlines.svg",
        "report.json",
        "timings.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    // The coarse grid misses the default Hamiltonian threshold, so verify fails with 4.
    let v = lcflow(&["--config", cfg.to_str().unwrap(), "verify"], &out);
    assert_eq!(v.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&v.stderr).contains("hamiltonian_spread"));
}

#[test]
fn downstream_commands_reuse_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let c = cfg.to_str().unwrap();
    assert_eq!(lcflow(&["--config", c, "solve2d"], &out).status.code(), Some(0));
    let before = std::fs::read(out.join("field.csv")).unwrap();
    let o = lcflow(&["--config", c, "-v", "witness", "--alpha", "0.25"], &out);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("resuming from"));
    let w = json(&o);
    assert_eq!(w[0]["alpha"], 0.25);
    assert_eq!(std::fs::read(out.join("field.csv")).unwrap(), before);
    let timings: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("timings.json")).unwrap()).unwrap();
    assert!(timings.get("strip2d").is_none());
}

#[test]
fn fixtures_verify() {
    let dir = tempfile::tempdir().unwrap();
    for f in ["shear", "cellular"] {
        let o = lcflow(&["verify", "--fixture", f], dir.path());
        assert_eq!(o.status.code(), Some(0), "{f}");
        assert_eq!(json(&o)["pass"], true);
    }
}

#[test]
fn solve1d_reports_basins() {
    let dir = tempfile::tempdir().unwrap();
    let o = lcflow(&["--mode", "zero", "solve1d", "--lambda", "0.01"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert!(r["m_lambda"].as_f64().unwrap() < -1.0);
    assert!(r["basins"].as_array().unwrap().len() >= 2);
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lcflow(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(lcflow(&["witness", "--alpha", "-1"], dir.path()).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[strip2d]\nhx = 0.3\n").unwrap();
    let o = lcflow(&["--config", bad.to_str().unwrap(), "run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("configuration"));
}

#[test]
fn numerical_failure_exits_with_three_and_keeps_a_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.toml");
    std::fs::write(&cfg, SMALL.replace("tol_cont = 1e-2", "tol_cont = 1e-9")).unwrap();
    let out = dir.path().join("out");
    let o = lcflow(&["--config", cfg.to_str().unwrap(), "run"], &out);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert_eq!(r["error"]["stage"], "strip2d");
    assert!(r["bvp1d"].is_object() && r["continuation"].is_null());
    assert!(out.join("report.json").exists());
}
