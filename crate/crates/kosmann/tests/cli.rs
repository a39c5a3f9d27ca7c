//! Smoke tests for the command-line interface: report format, exit codes
//! and run-to-run determinism.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kosmann"))
}

fn scenario(name: &str) -> String {
    format!("{}/scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn validate_suite_reports_and_exits_zero() {
    let out = bin()
        .args(["validate", "--scenario", &scenario("minkowski-cartesian")])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# seed: 42"));
    let checks: Vec<&str> = text.lines().filter(|l| l.starts_with("CHECK ")).collect();
    assert!(!checks.is_empty());
    for line in checks {
        // CHECK <suite>.<name> max_residual=<d.ddde±dd> at=(..) status=..
        assert!(line.starts_with("CHECK validate."), "{line}");
        let resid = line
            .split("max_residual=")
            .nth(1)
            .and_then(|s| s.split_whitespace().next())
            .unwrap();
        let (mant, exp) = resid.split_once('e').unwrap();
        assert_eq!(mant.trim_start_matches('-').len(), 5, "{resid}");
        assert_eq!(exp.len(), 3, "{resid}");
        assert!(exp.starts_with('+') || exp.starts_with('-'), "{resid}");
        assert!(line.contains(" at=("));
        assert!(line.ends_with("status=PASS") || line.ends_with("status=FAIL"));
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let run = || {
        bin()
            .args(["kosmann", "--scenario", &scenario("schwarzschild")])
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run(), run());
}

#[test]
fn json_output_parses() {
    let out = bin()
        .args([
            "spin",
            "--scenario",
            &scenario("conformally-flat"),
            "--json",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let arr = reports.as_array().unwrap();
    assert!(!arr.is_empty());
    assert!(arr.iter().all(|r| r["pass"].as_bool() == Some(true)));
}

#[test]
fn unknown_suite_exits_with_error() {
    let out = bin()
        .args(["bogus", "--scenario", &scenario("minkowski-cartesian")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn theorem81_rejects_the_natural_variant() {
    let out = bin()
        .args([
            "theorem81",
            "--scenario",
            &scenario("minkowski-cartesian"),
            "--variant",
            "natural",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn point_and_seed_overrides_change_the_plan() {
    let base = bin()
        .args(["kosmann", "--scenario", &scenario("minkowski-spherical")])
        .output()
        .unwrap();
    let reseeded = bin()
        .args([
            "kosmann",
            "--scenario",
            &scenario("minkowski-spherical"),
            "--seed",
            "7",
            "--points",
            "5",
        ])
        .output()
        .unwrap();
    assert!(base.status.success() && reseeded.status.success());
    let text = String::from_utf8(reseeded.stdout).unwrap();
    assert!(text.contains("# seed: 7"));
    assert!(text.contains("# points: 5"));
    assert_ne!(String::from_utf8(base.stdout).unwrap(), text);
}

#[test]
fn missing_scenario_file_is_an_error() {
    let out = bin()
        .args(["validate", "--scenario", "/nonexistent.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
