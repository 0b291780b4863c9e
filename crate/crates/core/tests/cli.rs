use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmcw-vitals"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_process_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let out = run(&[
        "simulate", "--rr", "15", "--hr", "75", "--range", "0.9", "--snr", "10", "--seed", "4", "--frames", "600",
        "--chirps", "16", "--clutter", "2.0", "-o", path(&scene),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["cube.bin", "config.toml", "truth.csv"] {
        assert!(scene.join(f).exists(), "missing {f}");
    }

    let estimates = dir.path().join("estimates.csv");
    let out = run(&["process", path(&scene.join("cube.bin")), "--method", "prony", "-o", path(&estimates)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&estimates).unwrap();
    assert!(text.starts_with("window,t_start_s,method,hr_bpm,rr_rpm"), "{text}");

    let summary = dir.path().join("summary.csv");
    let out = run(&[
        "evaluate",
        "--estimates",
        path(&estimates),
        "--truth",
        path(&scene.join("truth.csv")),
        "-o",
        path(&summary),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mae: f64 = fs::read_to_string(&summary)
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix("PRONY,hr_bpm_mae,"))
        .expect("hr_bpm_mae row")
        .parse()
        .unwrap();
    assert!(mae <= 1.5, "HR MAE {mae}");
}

#[test]
fn help_succeeds() {
    let out = run(&["process", "--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("--window-frames"));
}

#[test]
fn missing_input_names_the_path() {
    let out = run(&["process", "/nonexistent/cube.bin", "--config", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["process", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}
