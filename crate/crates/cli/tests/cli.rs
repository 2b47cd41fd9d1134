use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn frontlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frontlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SHORT_1D: &[&str] = &["--t-final", "120", "--dr", "0.1"];

#[test]
fn profile_writes_fixed_header_and_speed() {
    let tmp = TempDir::new().unwrap();
    let o = frontlab(
        tmp.path(),
        &["profile", "--theta", "0.25", "--out", "profile.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("profile.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("xi,u,du"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mantissa = first[1].split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 15);
    let report = json(&tmp.path().join("report.json"));
    let c = report["results"]["c_star"].as_f64().unwrap();
    assert!((c - 0.3535534).abs() < 1e-7);
    assert_eq!(report["pass"], Value::Bool(true));
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    assert!(report["versions"]["frontlab"].is_string());
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("exp.toml"),
        "[nonlinearity]\ntheta = 0.25\n",
    )
    .unwrap();
    let o = frontlab(
        tmp.path(),
        &[
            "profile", "--config", "exp.toml", "--theta", "0.3", "--out", "run",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let run = tmp.path().join("run");
    assert_eq!(
        fs::read_to_string(run.join("config.source.toml")).unwrap(),
        "[nonlinearity]\ntheta = 0.25\n"
    );
    assert!(fs::read_to_string(run.join("config.toml"))
        .unwrap()
        .contains("theta = 0.3"));
    let c = json(&run.join("report.json"))["results"]["c_star"]
        .as_f64()
        .unwrap();
    assert!((c - 0.4 / 2f64.sqrt()).abs() < 1e-7);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("theta.toml"),
        "[nonlinearity]\ntheta = 0.6\n",
    )
    .unwrap();
    let o = frontlab(
        tmp.path(),
        &["profile", "--config", "theta.toml", "--out", "a"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(0, 1/2)"), "{}", stderr(&o));

    fs::write(tmp.path().join("typo.toml"), "[grid]\ndx = 0.1\n").unwrap();
    let o = frontlab(
        tmp.path(),
        &["profile", "--config", "typo.toml", "--out", "b"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dx"), "{}", stderr(&o));

    fs::write(tmp.path().join("bad.csv"), "t,x\n1,2\n").unwrap();
    let o = frontlab(
        tmp.path(),
        &["fit", "--fronts", "bad.csv", "--out", "fit.json"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("r_level"), "{}", stderr(&o));
}

#[test]
fn simulate_then_fit_reports_k_against_target() {
    let tmp = TempDir::new().unwrap();
    let mut args = vec!["simulate1d", "--dim", "2", "--out", "sim"];
    args.extend_from_slice(SHORT_1D);
    let o = frontlab(tmp.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let sim = tmp.path().join("sim");
    let fronts = fs::read_to_string(sim.join("fronts.csv")).unwrap();
    assert!(fronts.starts_with("t,r_level,delay\n"));
    assert!(fs::read_to_string(sim.join("snapshots.csv"))
        .unwrap()
        .starts_with("t,r,u\n"));

    let o = frontlab(
        tmp.path(),
        &[
            "fit",
            "--fronts",
            "sim/fronts.csv",
            "--mode",
            "fixed_speed",
            "--window-lo",
            "30",
            "--window-hi",
            "120",
            "--out",
            "sim/fit.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let fit = json(&sim.join("fit.json"));
    for key in ["c_fit", "k_fit", "s_fit", "residual_rms", "window", "mode"] {
        assert!(!fit[key].is_null(), "missing {key}");
    }
    assert_eq!(fit["mode"], "fixed_speed");
    let report = json(&sim.join("report.json"));
    let target = report["results"]["k_target"].as_f64().unwrap();
    assert!((target - 2.0 * 2f64.sqrt()).abs() < 1e-6);
    let k = report["results"]["fit"]["k_fit"].as_f64().unwrap();
    assert!((k - target).abs() < 0.2 * target, "k_fit = {k}");
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    for out in ["a", "b"] {
        let mut args = vec!["simulate1d", "--out", out];
        args.extend_from_slice(SHORT_1D);
        assert!(frontlab(tmp.path(), &args).status.success());
    }
    for f in ["fronts.csv", "snapshots.csv", "report.json", "config.toml"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn polar_outputs_do_not_depend_on_thread_count() {
    let tmp = TempDir::new().unwrap();
    for (threads, out) in [("1", "p1"), ("3", "p3")] {
        let o = frontlab(
            tmp.path(),
            &[
                "simulate2d",
                "--shape",
                "star",
                "--a",
                "24",
                "--eps",
                "0.2",
                "--m",
                "3",
                "--angles",
                "24",
                "--t-final",
                "15",
                "--threads",
                threads,
                "--out",
                out,
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let p1 = tmp.path().join("p1");
    let shift = fs::read_to_string(p1.join("shift.csv")).unwrap();
    assert!(shift.starts_with("theta_rad,s_value\n"));
    assert_eq!(shift.lines().count(), 25);
    let diag = fs::read_to_string(p1.join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("t,grad_theta_max,sup_err_vs_shifted_wave,min_V_window\n"));
    let field = fs::read_to_string(p1.join("field_t000015.000.csv")).unwrap();
    assert!(field.starts_with("r,theta,u\n"));
    for f in ["shift.csv", "diagnostics.csv", "field_t000015.000.csv"] {
        assert!(
            fs::read(p1.join(f)).unwrap() == fs::read(tmp.path().join("p3").join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn certify_writes_summary_and_trajectories() {
    let tmp = TempDir::new().unwrap();
    let o = frontlab(
        tmp.path(),
        &[
            "certify",
            "--system",
            "41",
            "--eps",
            "0.1",
            "--out",
            "c/cert.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let cert = json(&tmp.path().join("c/cert.json"));
    for key in [
        "params",
        "envelope_pass",
        "K",
        "residual_min",
        "condition_4_12_pass",
        "condition_4_14_pass",
    ] {
        assert!(cert.get(key).is_some(), "missing {key}");
    }
    assert_eq!(cert["envelope_pass"], Value::Bool(true));
    assert!(cert["residual_min"].is_null());
    let csv = fs::read_to_string(tmp.path().join("c/certificate.csv")).unwrap();
    assert!(csv.starts_with("t,q,xi\n"));

    let o = frontlab(
        tmp.path(),
        &["certify", "--system", "310", "--eps", "0.02", "--out", "g"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let g = json(&tmp.path().join("g/cert.json"));
    let (a, b) = (
        g["alpha"].as_f64().unwrap(),
        g["alpha_quasi_static"].as_f64().unwrap(),
    );
    assert!((a - b).abs() < 0.01 * b, "alpha {a} vs {b}");
}

#[test]
fn failed_report_check_exits_with_four() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("strict.toml"),
        "[report]\nk_tolerance = 1e-9\n[grid]\ndr = 0.1\n",
    )
    .unwrap();
    let o = frontlab(
        tmp.path(),
        &[
            "report",
            "--config",
            "strict.toml",
            "--t-final",
            "120",
            "--out",
            "r",
        ],
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("k_fit_vs_target"));
    let report = json(&tmp.path().join("r/report.json"));
    assert_eq!(report["pass"], Value::Bool(false));
    assert_eq!(report["command"], "report");
}

#[test]
fn numerical_failures_exit_with_three() {
    let tmp = TempDir::new().unwrap();
    let o = frontlab(tmp.path(), &["report", "--t-final", "30", "--out", "r"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn default_run_directory_is_named_by_time_and_hash() {
    let tmp = TempDir::new().unwrap();
    let o = frontlab(tmp.path(), &["profile"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let entries: Vec<_> = fs::read_dir(tmp.path().join("runs"))
        .unwrap()
        .map(|e| e.unwrap())
        .collect();
    assert_eq!(entries.len(), 1);
    let name = entries[0].file_name().into_string().unwrap();
    let (time, hash) = name.split_once('-').unwrap();
    assert!(time.parse::<u64>().is_ok());
    let report = json(&entries[0].path().join("report.json"));
    assert!(report["config_hash"].as_str().unwrap().starts_with(hash));
    assert!(entries[0].path().join("profile.csv").exists());
}
