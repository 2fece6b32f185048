use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn rtac(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtac"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn planar_config(dir: &Path, extra: Value) -> std::path::PathBuf {
    let mut doc = json!({
        "model": {"name": "example_4_2", "c": 1.0, "k1": 1.0, "k2": 3.0},
        "theta_true": [2.0],
        "x0": [1.0, 1.0],
        "T": 1.0,
        "a_coeff": 0.1,
        "Ntilde": 2,
        "t_final": 4.0,
        "output": {
            "trajectory_csv": "traj.csv",
            "events_csv": "events.csv",
            "plot_svg": "run.svg"
        }
    });
    for (k, v) in extra.as_object().unwrap() {
        doc[k] = v.clone();
    }
    let p = dir.join("config.json");
    fs::write(&p, doc.to_string()).unwrap();
    p
}

#[test]
fn simulate_writes_outputs_that_verify_again() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planar_config(dir.path(), json!({"observability": {"draws": 2}}));
    let o = rtac(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("events: 4"), "{out}");
    assert!(out.contains("PASS  event_count"), "{out}");
    for f in ["traj.csv", "events.csv", "run.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let header = fs::read_to_string(dir.path().join("traj.csv")).unwrap();
    assert!(header.starts_with("t,x_1,x_2,u_1,thetahat_1,V,threshold,event_flag"));

    let o = rtac(
        &["verify", "events.csv", "traj.csv", "--theta-true", "2", "--dwell", "1", "--n-cert", "1"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
    assert!(stdout(&o).contains("PASS  finite_time_identification"));
}

#[test]
fn verify_flags_a_wrong_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planar_config(dir.path(), json!({}));
    assert!(rtac(&["simulate", cfg.to_str().unwrap()], dir.path()).status.success());
    let o = rtac(
        &["verify", "events.csv", "traj.csv", "--theta-true", "-3", "--dwell", "1", "--n-cert", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL  finite_time_identification"), "{}", stdout(&o));
}

#[test]
fn simulate_json_summary_parses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planar_config(dir.path(), json!({"output": null}));
    let o = rtac(&["simulate", "--json", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["events"], 4);
    assert_eq!(v["outcome"], "Completed");
    assert!((v["final_estimate"][0].as_f64().unwrap() - 2.0).abs() <= 1e-6);
}

#[test]
fn plot_renders_a_trajectory_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planar_config(dir.path(), json!({}));
    assert!(rtac(&["simulate", cfg.to_str().unwrap()], dir.path()).status.success());
    let o = rtac(&["plot", "traj.csv", "-o", "again.svg"], dir.path());
    assert!(o.status.success());
    let svg = fs::read_to_string(dir.path().join("again.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert_eq!(svg, fs::read_to_string(dir.path().join("run.svg")).unwrap());
}

#[test]
fn check_observability_reports_gain_condition() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    fs::write(
        &good,
        json!({
            "model": {"name": "example_4_2", "c": 1.0, "k1": 1.0, "k2": 3.0},
            "observability": {"draws": 3}
        })
        .to_string(),
    )
    .unwrap();
    let o = rtac(&["check-observability", "good.json", "--summary", "s.json"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("3 of 3 draws certified"));
    let s: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(s["verdict"], "certified");
    assert_eq!(s["N"], 1);
    assert_eq!(s["draws"][0]["index_sets"], json!([[1]]));

    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        json!({
            "model": {"name": "example_4_2", "c": 1.0, "k1": 1.0, "k2": 2.0},
            "observability": {"draws": 2}
        })
        .to_string(),
    )
    .unwrap();
    let o = rtac(&["check-observability", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    let s: Value = serde_json::from_str(&out[out.find("{\n").unwrap()..]).unwrap();
    assert_eq!(s["verdict"], "not_certified");
    assert!(!s["draws"][0]["witnesses"].as_array().unwrap().is_empty());
}

#[test]
fn bad_config_is_an_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planar_config(dir.path(), json!({"a_coeff": -1.0}));
    let o = rtac(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("a_coeff"));
}
