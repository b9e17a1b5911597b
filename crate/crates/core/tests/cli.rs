use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use smallgain::cli::{Report, BUNDLED_CONFIG};

fn smallgain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smallgain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn report(path: &Path) -> Report {
    Report::parse(&fs::read_to_string(path).unwrap()).unwrap()
}

fn num(r: &Report, key: &str) -> f64 {
    r.get(key).unwrap_or_else(|| panic!("missing {key}")).parse().unwrap()
}

#[test]
fn certify_bundled_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = smallgain(&["certify", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out_dir.join("certificate.txt"));
    assert!((num(&r, "lambda_total") - 0.71463).abs() < 1e-4);
    assert!((num(&r, "k_max") - 3.918).abs() < 5e-3);
    assert_eq!(num(&r, "secant_margin"), 8.0);
    assert_eq!(r.get("secant_scope"), Some("linearized, delay-free, local"));
    assert_eq!(r.get("nothing_certified"), Some("false"));
    assert_eq!(r.get("check"), Some("not_run"));
    let table = fs::read_to_string(out_dir.join("ubar_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 802);
}

#[test]
fn certify_check_passes_below_k_max() {
    let tmp = tempfile::tempdir().unwrap();
    let out = smallgain(&["certify", "--check", "--seed", "7", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&tmp.path().join("certificate.txt"));
    assert_eq!(r.get("check"), Some("passed"));
    assert_eq!(r.get("check.runs"), Some("9"));
    assert!(num(&r, "check.spread") < 1e-4);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    for cmd in ["certify", "simulate"] {
        let a = tmp.path().join(format!("{cmd}-a"));
        let b = tmp.path().join(format!("{cmd}-b"));
        let mut extra = vec![];
        if cmd == "certify" {
            extra = vec!["--check", "--seed", "3"];
        }
        for dir in [&a, &b] {
            let mut args = vec![cmd, "--out", dir.to_str().unwrap()];
            args.extend(&extra);
            assert_eq!(code(&smallgain(&args)), 0);
        }
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?} differs");
        }
    }
}

#[test]
fn unknown_key_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &BUNDLED_CONFIG.replace("dt = 0.01", "step = 0.01"));
    let out = smallgain(&["certify", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));
}

#[test]
fn missing_config_file_is_an_input_error() {
    let out = smallgain(&["simulate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn nothing_certified_when_input_exceeds_mu() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &BUNDLED_CONFIG.replace("u_bar = 0.061", "u_bar = 0.4"));
    let out_dir = tmp.path().join("out");
    let out = smallgain(&["certify", "--check", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out_dir.join("certificate.txt"));
    assert_eq!(r.get("nothing_certified"), Some("true"));
    assert_eq!(r.get("check"), Some("skipped_nothing_certified"));
}

#[test]
fn simulate_oscillates_at_high_gain_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    assert_eq!(code(&smallgain(&["simulate", "--out", out_dir.to_str().unwrap()])), 0);
    let summary = report(&out_dir.join("summary.txt"));
    assert_eq!(summary.get("oscillatory.x3"), Some("true"));
    assert!(num(&summary, "amplitude.x3") > 0.05);
    assert_eq!(summary.get("all_converged"), Some("false"));

    let traj = out_dir.join("trajectory.csv");
    let header = fs::read_to_string(&traj).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "t,x1,x2,x3,u_eff");
    let out = smallgain(&["amplitude", traj.to_str().unwrap(), "--tail-fraction", "0.2", "--tol", "1e-4"]);
    assert_eq!(code(&out), 0);
    let again = Report::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    for col in ["x1", "x2", "x3", "u_eff"] {
        for key in ["amplitude", "converged", "limit"] {
            let k = format!("{key}.{col}");
            assert_eq!(again.get(&k), summary.get(&k), "{k}");
        }
    }
}

#[test]
fn simulate_converges_without_feedback() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &BUNDLED_CONFIG.replace("k = 5.2", "k = 0.0"));
    let out_dir = tmp.path().join("out");
    assert_eq!(code(&smallgain(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()])), 0);
    let r = report(&out_dir.join("summary.txt"));
    assert_eq!(r.get("all_converged"), Some("true"));
    assert!(num(&r, "equilibrium_residual") < 1e-8);
    assert_eq!(r.get("clamp.flagged_steps"), Some("0"));
}

#[test]
fn sweep_tabulates_the_transition() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&smallgain(&["sweep", "--out", tmp.path().to_str().unwrap()])), 0);
    let mut rdr = csv::Reader::from_path(tmp.path().join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 7);
    assert_eq!(&rows[0][2], "true");
    assert_eq!(&rows[6][2], "false");
}

#[test]
fn hopf_onset_and_bad_bracket() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&smallgain(&["hopf", "--out", tmp.path().to_str().unwrap()])), 0);
    let r = report(&tmp.path().join("hopf.txt"));
    assert!((4.8..=5.4).contains(&num(&r, "onset")));

    let cfg = write_config(tmp.path(), &BUNDLED_CONFIG.replace("hopf_bracket = [3.918, 6.0]", "hopf_bracket = [1.0, 2.0]"));
    let out = smallgain(&["hopf", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn delayed_config_converges() {
    let tmp = tempfile::tempdir().unwrap();
    let text = include_str!("../configs/mapk_delayed.toml");
    let cfg = write_config(tmp.path(), text);
    let out_dir = tmp.path().join("out");
    assert_eq!(code(&smallgain(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()])), 0);
    let r = report(&out_dir.join("summary.txt"));
    assert_eq!(r.get("all_converged"), Some("true"));
    assert_eq!(num(&r, "delay.feedback"), 3.0);
}
