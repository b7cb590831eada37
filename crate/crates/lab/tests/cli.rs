use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pat_core::Grid2D;
use pat_lab::formats::decode_trace;

fn pat_lab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pat-lab"))
        .args(args)
        .current_dir(dir)
        .env_remove("PAT_LAB_WORKERS")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.into()
}

#[test]
fn zero_phantom_gives_a_zero_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "zero.toml", "[grid]\ncells = 16\n");
    let out = pat_lab(&["simulate", "--config", &cfg, "--out", "run"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = fs::read(tmp.path().join("run/trace.patt")).unwrap();
    let m = decode_trace(&bytes, Grid2D::unit_square(16).unwrap(), Path::new("trace")).unwrap();
    assert!(m.n_times() > 1);
    assert!(m.samples().iter().all(|v| *v == 0.0));
    for f in ["config.toml", "manifest.toml", "trace.csv", "energy.csv", "u0.patf", "c.patf"] {
        assert!(tmp.path().join("run").join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(tmp.path().join("run/config.toml")).unwrap(), "[grid]\ncells = 16\n");
}

#[test]
fn run_directories_are_write_once() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "zero.toml", "[grid]\ncells = 8\n");
    assert!(pat_lab(&["simulate", "--config", &cfg, "--out", "run"], tmp.path()).status.success());
    let again = pat_lab(&["simulate", "--config", &cfg, "--out", "run"], tmp.path());
    assert_eq!(again.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&again.stderr).contains("already exists"));
}

#[test]
fn config_errors_name_the_line_and_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[grid]\ncells = 16\n[impedance]\ngamma = -1.0\n");
    let out = pat_lab(&["simulate", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn identical_pair_is_reported_as_degenerate() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[grid]\ncells = 16\n[pressure]\ncount = 2\n\
                [ensemble]\nsize = 1\ntarget_speed_ratio = 0.0\ntarget_state_ratio = 0.0\n";
    let cfg = write(tmp.path(), "same.toml", text);
    let out = pat_lab(&["verify", "--config", &cfg, "--out", "run", "--workers", "2"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("1 degenerate"), "{stdout}");
    assert!(stdout.contains("note:"), "{stdout}");
    let report = fs::read_to_string(tmp.path().join("run/report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "member,speed_ratio_sq,state_ratio_sq,meas_ratio_sq,in_region,quotient");
    assert!(lines[2].starts_with("summary,"));
}

#[test]
fn out_of_region_member_is_a_precondition_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[grid]\ncells = 16\n[pressure]\ncount = 2\n\
                [ensemble]\nsize = 2\ntarget_speed_ratio = 1e-2\ntarget_state_ratio = 1e-6\n";
    let cfg = write(tmp.path(), "outside.toml", text);
    let out = pat_lab(&["verify", "--config", &cfg, "--out", "run"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside"), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn workers_come_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "zero.toml", "[grid]\ncells = 8\n");
    let out = Command::new(env!("CARGO_BIN_EXE_pat-lab"))
        .args(["simulate", "--config", &cfg, "--out", "run"])
        .current_dir(tmp.path())
        .env("PAT_LAB_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("worker"));
}

#[test]
fn seed_override_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", "seed = 5\n[grid]\ncells = 8\n[pressure]\ncount = 1\n");
    let run = |seed: &str, out: &str| {
        assert!(pat_lab(&["simulate", "--config", &cfg, "--out", out, "--seed", seed], tmp.path()).status.success());
        (
            fs::read_to_string(tmp.path().join(out).join("manifest.toml")).unwrap(),
            fs::read(tmp.path().join(out).join("u0.patf")).unwrap(),
        )
    };
    let (m1, u1) = run("5", "a");
    let (m2, u2) = run("6", "b");
    assert!(m1.contains("seed = 5"));
    assert!(m2.contains("seed = 6"));
    assert_ne!(u1, u2);
}
