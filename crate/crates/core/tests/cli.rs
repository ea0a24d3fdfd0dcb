use std::path::{Path, PathBuf};
use std::process::Command;

use ringqed::cli::{EXIT_CONFIG, EXIT_IO, EXIT_OK};

fn config(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)).unwrap()
}

fn ringqed(args: &[&str], config: &Path, out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_ringqed"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn write_cfg(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn spectrum_columns_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &config("cav5cm.cfg"));
    assert_eq!(ringqed(&["spectrum"], &cfg, dir.path()), EXIT_OK);
    let text = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert!(text.starts_with("# ringqed ") && text.lines().next().unwrap().contains("config_sha256="));
    let (header, rows) = read_table(&dir.path().join("spectrum.csv"));
    assert_eq!(header, ["detuning_hz", "power_tc", "power_ci", "power_empty"]);
    assert_eq!(rows.len(), 4801);
    assert!((rows[0][0] + 60e6).abs() < 1e-3 && (rows[4800][0] - 60e6).abs() < 1e-3);
}

#[test]
fn spectrum_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &config("cav5cm.cfg"));
    assert_eq!(ringqed(&["spectrum", "--format", "json"], &cfg, dir.path()), EXIT_OK);
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("spectrum.json")).unwrap()).unwrap();
    assert_eq!(v["columns"][1], "power_tc");
}

#[test]
fn empty_ensemble_models_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &config("cav5cm.cfg").replace("od = 1.42", "od = 0.0"));
    assert_eq!(ringqed(&["spectrum"], &cfg, dir.path()), EXIT_OK);
    let (_, rows) = read_table(&dir.path().join("spectrum.csv"));
    // the single-mode line is Lorentzian, the ring is Airy; they part as Δ² t_rt²
    for r in &rows {
        assert!((r[1] - r[2]).abs() < 1e-4, "{r:?}");
        assert!((r[2] - r[3]).abs() < 1e-12, "{r:?}");
    }
    let centre = &rows[rows.len() / 2];
    assert!(centre[0].abs() < 1e-3 && (centre[1] - centre[2]).abs() < 1e-9, "{centre:?}");
}

#[test]
fn zero_sample_sweep_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &config("cav5cm.cfg").replace("samples = 4801", "samples = 0"));
    assert_eq!(ringqed(&["spectrum"], &cfg, dir.path()), EXIT_CONFIG);
}

#[test]
fn timetrace_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &config("cav5cm.cfg"));
    assert_eq!(ringqed(&["timetrace"], &cfg, dir.path()), EXIT_OK);
    let (header, rows) = read_table(&dir.path().join("timetrace.csv"));
    assert_eq!(header, ["time_s", "det_power_tc", "det_power_ci", "ecav_re", "ecav_im"]);
    assert!(rows.len() > 100);
    assert!(rows.iter().all(|r| r[1] >= 0.0 && r[2] >= 0.0));
}

#[test]
fn coarse_step_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = config("cav5cm.cfg").replace("duration = 50e-9", "duration = 50e-9\ndt = 1e-9");
    let cfg = write_cfg(dir.path(), &text);
    assert_eq!(ringqed(&["timetrace"], &cfg, dir.path()), EXIT_CONFIG);
}

#[test]
fn synthetic_noise_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &config("cav5cm.cfg"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(ringqed(&["synth-noise"], &cfg, &a), EXIT_OK);
    assert_eq!(ringqed(&["synth-noise"], &cfg, &b), EXIT_OK);
    let bytes = std::fs::read(a.join("counts.csv")).unwrap();
    assert_eq!(bytes, std::fs::read(b.join("counts.csv")).unwrap());

    let c = dir.path().join("c");
    assert_eq!(ringqed(&["synth-noise", "--seed", "2"], &cfg, &c), EXIT_OK);
    assert_ne!(bytes, std::fs::read(c.join("counts.csv")).unwrap());

    assert_eq!(ringqed(&["synth-noise", "--counts", "0"], &cfg, dir.path()), EXIT_CONFIG);
}

fn fit_own_trace(text: &str) -> f64 {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), text);
    assert_eq!(ringqed(&["timetrace"], &cfg, dir.path()), EXIT_OK);
    let (_, rows) = read_table(&dir.path().join("timetrace.csv"));
    let mut data = String::from("time_s,power\n");
    for r in &rows {
        data.push_str(&format!("{:e},{:e}\n", r[0], r[2]));
    }
    let data_path = dir.path().join("power.csv");
    std::fs::write(&data_path, data).unwrap();
    let code = ringqed(&["fit", "--data", data_path.to_str().unwrap()], &cfg, dir.path());
    assert_eq!(code, EXIT_OK);
    let fit: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    fit["od_hat"].as_f64().unwrap()
}

#[test]
fn fit_recovers_optical_depth() {
    let od = fit_own_trace(&config("cav5cm.cfg"));
    assert!((od - 1.42).abs() / 1.42 < 5e-3, "od_hat = {od}");
}

#[test]
fn fit_on_empty_cavity_finds_no_atoms() {
    let text = config("cav5cm.cfg")
        .replace("od = 1.42", "od = 0.0")
        .replace("od_max = 10.0", "od_max = 30.0");
    let od = fit_own_trace(&text);
    assert!(od < 0.1, "od_hat = {od}");
}

#[test]
fn step_must_divide_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let text = config("cav5cm.cfg").replace("duration = 50e-9", "duration = 50e-9\ndt = 2.3e-11");
    let cfg = write_cfg(dir.path(), &text);
    assert_eq!(ringqed(&["timetrace"], &cfg, dir.path()), EXIT_CONFIG);
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ringqed(&["spectrum"], &dir.path().join("absent.cfg"), dir.path()), EXIT_IO);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &config("cav5cm.cfg").replace("[ring]", "[ring]\nfinesse = 3"));
    assert_eq!(ringqed(&["spectrum"], &cfg, dir.path()), EXIT_CONFIG);
}
