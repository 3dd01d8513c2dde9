use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn tendon(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tendon"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Small enough to train in well under a second; accuracy is irrelevant here.
fn quick_scenario(extra: Value) -> Value {
    let mut s = json!({
        "version": 1,
        "name": "quick",
        "duration_s": 3.0,
        "static": {
            "hidden": [8],
            "grid": {
                "points_per_joint": 3,
                "tensions_per_pose": 2,
                "f_max": 100.0,
                "slack_probability": 0.1,
                "slack_pose": true
            },
            "train": {"learning_rate": 0.3, "batch_size": 4, "epochs": 5, "seed": 0},
            "mse_threshold": 10.0,
            "output_margin": 0.02
        },
        "dynamic": {
            "N": 10,
            "alpha": 1000.0,
            "beta": 0.02,
            "iterations": 5,
            "pid": {"kp": 0.228, "ki": 0.319, "kd": 0.041},
            "rollout_s": 4.0,
            "model": {
                "hidden": [8],
                "train": {"learning_rate": 0.05, "batch_size": 16, "epochs": 2, "seed": 0},
                "holdout_fraction": 0.2,
                "rms_threshold": 100.0
            }
        }
    });
    for (k, v) in extra.as_object().unwrap() {
        s[k] = v.clone();
    }
    s
}

fn write_config(dir: &Path, name: &str, v: &Value) {
    std::fs::write(dir.join(name), serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn report(dir: &Path, file: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(file)).unwrap()).unwrap()
}

#[test]
fn unknown_flag_prints_usage_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = tendon(&["run", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = tendon(&["run", "--config", "absent/pedal.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent/pedal.json"), "{}", stderr(&o));
}

#[test]
fn malformed_config_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        "{\n  \"version\": 1,\n  \"name\": \"x\",\n  \"duration\": 3\n}",
    )
    .unwrap();
    let o = tendon(&["run", "--config", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.json:4:"), "{}", stderr(&o));
}

#[test]
fn init_model_then_run_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "init.json", &quick_scenario(json!({})));
    let o = tendon(
        &["init-model", "--config", "init.json", "--out", "models"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("models/static_model.json").exists());

    let run =
        quick_scenario(json!({"static_model": "models/static_model.json", "controller": "pid"}));
    write_config(dir.path(), "pedal.json", &run);
    let o = tendon(
        &[
            "run",
            "--config",
            "pedal.json",
            "--seed",
            "7",
            "--out",
            "results",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&dir.path().join("results"), "quick_report.json");
    assert_eq!(r["seed"], 7);
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    assert!(r["metrics"]["settle_s"].is_number() || r["metrics"]["settle_s"] == "never");
    assert_eq!(r["files"], json!(["quick.csv", "quick_report.json"]));
    let csv = std::fs::read_to_string(dir.path().join("results/quick.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 150);
    // the report also goes to stdout
    let printed: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(printed, r);
}

#[test]
fn collect_then_train_dynamics_from_the_saved_rollout() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "s.json", &quick_scenario(json!({})));
    let o = tendon(
        &["collect", "--config", "s.json", "--out", "data"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // 4 s of 20 ms ticks, horizon 10
    assert_eq!(
        report(&dir.path().join("data"), "rollout_report.json")["metrics"]["windows"],
        191.0
    );
    let o = tendon(
        &[
            "train-dynamics",
            "--config",
            "s.json",
            "--data",
            "data/rollout.json",
            "--out",
            "data",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&dir.path().join("data"), "dynamics_model_report.json");
    assert!(r["metrics"]["one_step_rms"].as_f64().unwrap().is_finite());
    assert!(dir.path().join("data/dynamics_model.json").exists());
}

#[test]
fn compare_assert_exits_2_when_learned_loses() {
    let dir = tempfile::tempdir().unwrap();
    // an optimizer that cannot leave the rest pedal never settles
    let mut s = quick_scenario(json!({}));
    s["dynamic"]["alpha"] = json!(1e9);
    s["dynamic"]["iterations"] = json!(1);
    write_config(dir.path(), "cmp.json", &s);
    let o = tendon(
        &[
            "compare", "--config", "cmp.json", "--assert", "--out", "cmp",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("FAIL mpc settles before pid"),
        "{}",
        stdout(&o)
    );
    let r = report(&dir.path().join("cmp"), "quick_report.json");
    assert_eq!(r["metrics"]["settle_mpc_s"], "never");
    assert!(dir.path().join("cmp/quick_pid.csv").exists());
    assert!(dir.path().join("cmp/quick_mpc.csv").exists());
}

#[test]
fn demos_run_with_their_own_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = quick_scenario(json!({"duration_s": 2.0}));
    s["demo"] = json!({"hold_s": 1.0, "settle_s": 0.5});
    write_config(dir.path(), "d.json", &s);
    for cmd in ["relax-demo", "ekf-demo"] {
        let o = tendon(&[cmd, "--config", "d.json", "--out", "demo"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
    }
    let files: Vec<String> = std::fs::read_dir(dir.path().join("demo"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(files.contains(&"quick_relax.csv".to_string()), "{files:?}");
    assert!(files.contains(&"quick_ekf.csv".to_string()), "{files:?}");
}
