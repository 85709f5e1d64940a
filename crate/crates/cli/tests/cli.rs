use std::fs;
use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

fn out_dir(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&d);
    d
}

fn run(args: &[&str], out: &PathBuf) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_evoeq"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap()
}

fn report(out: &PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn heat_sin_mode_writes_trajectory_and_certificate() {
    let out = out_dir("heat");
    let code = run(&["solve", "--preset", "heat", "--ivp", "sin-mode", "--nu", "auto", "--space", "0,1,32", "--grid", "-1,0.015625,512"], &out);
    assert_eq!(code, 0);
    let r = report(&out);
    assert_eq!(r["schema"], "evoeq-report");
    assert_eq!(r["version"], 1);
    assert!(r["c"].as_f64().unwrap() > 0.0);
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    let csv = fs::read_to_string(out.join("solution.csv")).unwrap();
    assert!(csv.starts_with("t,re0,im0,"));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = out_dir("det-a");
    let b = out_dir("det-b");
    let args = ["transform", "--signal", "random", "--seed", "11"];
    assert_eq!(run(&args, &a), 0);
    assert_eq!(run(&args, &b), 0);
    for f in ["report.json", "spectrum.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn dae_example_decays_in_first_component() {
    let out = out_dir("dae");
    assert_eq!(run(&["dae", "--pair", "example-2x2", "--u0", "1,0"], &out), 0);
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[1] - (-v[0]).exp()).abs() < 1e-9, "{line}");
        assert!(v[3].abs() < 1e-12, "{line}");
    }
    assert_eq!(report(&out)["details"]["index"]["index"], 1);
}

#[test]
fn inconsistent_initial_value_exits_two() {
    let out = out_dir("dae-bad");
    assert_eq!(run(&["dae", "--pair", "example-2x2", "--u0", "0,1"], &out), 2);
    let r = report(&out);
    assert_eq!(r["pass"], false);
    assert!(r["error"].as_str().unwrap().contains("consistent"));
}

#[test]
fn stability_hypothesis_violation_exits_two() {
    let out = out_dir("stab-bad");
    assert_eq!(run(&["stability", "--model", "delay-heat", "--a", "1", "--b", "2"], &out), 2);
    let out = out_dir("stab");
    assert_eq!(run(&["stability", "--model", "heat"], &out), 0);
    let rho = report(&out)["details"]["bound"]["rho0"].as_f64().unwrap();
    assert!((rho - 9.87).abs() < 0.05, "{rho}");
}

#[test]
fn usage_errors_exit_one() {
    let out = out_dir("usage");
    assert_eq!(run(&["solve", "--preset", "nope"], &out), 1);
    assert_eq!(run(&["solve", "--grid", "0,-1,8"], &out), 1);
    assert_eq!(run(&["solve", "--bogus"], &out), 1);
    assert_eq!(run(&["--help"], &out), 0);
}

#[test]
fn sin_memory_table_matches_bessel_reference() {
    let out = out_dir("hom");
    assert_eq!(run(&["homogenize", "--problem", "ode-sin-memory", "--n", "128"], &out), 0);
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("n,error,series_error"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row[0], 128.0);
    assert!(row[1] < 1e-3 && row[2] < 1e-8, "{row:?}");
}

#[test]
fn delay_ode_matches_steps_method() {
    let out = out_dir("ode");
    assert_eq!(run(&["ode", "--problem", "delay"], &out), 0);
    assert_eq!(run(&["ode", "--problem", "logistic"], &out), 0);
}
