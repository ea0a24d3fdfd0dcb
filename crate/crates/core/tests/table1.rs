use std::path::Path;
use std::process::Command;

use ringqed::cli::{check_params, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK};
use ringqed::config::RunConfig;

fn table1() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/table1.cfg")).unwrap()
}

fn run(config: &Path, out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_ringqed"))
        .args(["check-params", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn tabulated_parameters_are_consistent() {
    let cfg = RunConfig::from_str(&table1()).unwrap();
    let report = check_params(&cfg).unwrap();
    assert_eq!(report.checks.iter().filter(|l| l.quantity == "od_from_g").count(), 3);
    for l in &report.checks {
        assert!(l.pass, "{} {}: {} vs {:?}", l.name, l.quantity, l.computed, l.expected);
    }
}

#[test]
fn cli_writes_report_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.cfg");
    std::fs::write(&cfg, table1()).unwrap();
    assert_eq!(run(&cfg, dir.path()), EXIT_OK);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("check_report.json")).unwrap()).unwrap();
    assert_eq!(report["all_pass"], serde_json::Value::Bool(true));
}

#[test]
fn perturbed_coupling_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.cfg");
    std::fs::write(&cfg, table1().replace("g = 3.70e6", "g = 4.07e6")).unwrap();
    assert_eq!(run(&cfg, dir.path()), EXIT_CHECK_FAILED);
}

#[test]
fn empty_check_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.cfg");
    std::fs::write(&cfg, "[atom]\ngamma = 2.62e6\n").unwrap();
    assert_eq!(run(&cfg, dir.path()), EXIT_CONFIG);
}
