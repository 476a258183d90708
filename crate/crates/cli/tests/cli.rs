//! Drives the `nlsi` binary through a full surrogate workflow.

use std::path::Path;
use std::process::{Command, Output};

fn nlsi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlsi")).args(args).output().expect("spawn nlsi")
}

fn ok(args: &[&str]) -> String {
    let out = nlsi(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn surrogate_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("data").join("manifest.toml");
    std::fs::create_dir_all(manifest.parent().unwrap()).unwrap();
    ok(&["ingest", "--manifest", s(&manifest), "--surrogate", "--train-len", "400", "--test-len", "150"]);
    assert!(manifest.exists());

    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        r#"
manifest = "data/manifest.toml"
benchmarks = ["emps", "ced"]
models = ["lti_arx", "pnarx"]
seed = 0
output_dir = "out"
"#,
    )
    .unwrap();
    let table = dir.path().join("table.md");
    let stdout = ok(&["benchmark", "--config", s(&config), "--seed", "11", "--table", s(&table)]);
    assert!(stdout.starts_with("4 reports"), "{stdout}");
    let written = std::fs::read_to_string(&table).unwrap();
    assert!(written.contains("ARX"), "{written}");

    let out = dir.path().join("out");
    let printed = ok(&["report", "--dir", s(&out)]);
    assert_eq!(printed, written);
    let csv = ok(&["report", "--dir", s(&out), "--format", "csv"]);
    assert!(csv.lines().count() > 1);

    let model = dir.path().join("emps_arx.json");
    let sel = ok(&[
        "fit", "--manifest", s(&manifest), "--benchmark", "emps", "--model", "lti_arx", "--seed", "11", "--out", s(&model),
    ]);
    assert!(sel.contains('='), "{sel}");

    let sim = dir.path().join("sim.csv");
    let test = manifest.parent().unwrap().join("emps_test.csv");
    let rmse = ok(&["simulate", "--model", s(&model), "--input", s(&test), "--output", s(&sim)]);
    let value: f64 = rmse.trim().strip_prefix("rmse ").unwrap().parse().unwrap();
    assert!(value.is_finite() && value >= 0.0);
    let header = std::fs::read_to_string(&sim).unwrap();
    assert!(header.starts_with("u,y_sim"), "{header}");
}

#[test]
fn benchmark_requires_seed() {
    let out = nlsi(&["benchmark", "--config", "whatever.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn selftest_passes() {
    let stdout = ok(&["selftest"]);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
}

#[test]
fn missing_manifest_is_reported() {
    let out = nlsi(&["ingest", "--manifest", "/nonexistent/manifest.toml", "--offline"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
