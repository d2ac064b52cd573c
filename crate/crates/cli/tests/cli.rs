use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wta(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wta"))
        .args(args)
        .env("RUST_LOG", "warn")
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = "
[training]
max_epochs = 8
window = 2
calibration_trials = 20
n_probes = 4
";

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    for (out, seed) in [("a", "7"), ("b", "7"), ("c", "8")] {
        let o = wta(dir.path(), &["gen", "--seed", seed, "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |d: &str| fs::read(dir.path().join(d).join("patterns.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    assert!(dir.path().join("a/config.toml").exists());
}

#[test]
fn zero_classes_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[stimulus]\nclasses = 0\n").unwrap();
    let o = wta(dir.path(), &["gen", "--config", "c.toml"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("invalid parameter"), "{}", stderr(&o));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[stimulus]\nclases = 3\n").unwrap();
    let o = wta(dir.path(), &["gen", "--config", "c.toml"]);
    assert!(!o.status.success());
}

#[test]
fn tune_reports_default_geometry() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let o = wta(dir.path(), &["tune", "--config", "c.toml", "--out", "t"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["m"], 25);
    assert_eq!(v["k"], 4);
    assert_eq!(v["neurons"], 22);
    let saved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("t/tune.json")).unwrap()).unwrap();
    assert_eq!(saved, v);
}

#[test]
fn weak_inhibition_fails_calibration_with_a_hint() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        format!("{SMALL}\n[network]\ni0_inh = 1.0\n"),
    )
    .unwrap();
    let o = wta(dir.path(), &["tune", "--config", "c.toml"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(
        err.contains("calibration failed") && err.contains("hint:"),
        "{err}"
    );
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let o = wta(
        dir.path(),
        &["train", "--config", "c.toml", "--trials", "1", "--out", "r"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let trials = fs::read_to_string(dir.path().join("r/trials.csv")).unwrap();
    assert!(trials.starts_with("trial_id,success,failure_mode,ep_sat,fp_rate"));
    assert_eq!(trials.lines().count(), 2);
    let epochs = fs::read_to_string(dir.path().join("r/epochs.csv")).unwrap();
    assert!(epochs.lines().count() >= 2);

    let o = wta(
        dir.path(),
        &[
            "eval",
            "--config",
            "c.toml",
            "--snapshot",
            "r/wiring_0.json",
            "--trial",
            "r/trial_0.json",
            "--out",
            "e",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("success="));
    assert!(dir.path().join("e/eval.csv").exists());

    // a snapshot whose geometry disagrees with the trial record
    let mut wiring: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r/wiring_0.json")).unwrap())
            .unwrap();
    let mut record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r/trial_0.json")).unwrap())
            .unwrap();
    record["tune"]["neurons"] = serde_json::json!(99);
    fs::write(dir.path().join("bad.json"), record.to_string()).unwrap();
    let o = wta(
        dir.path(),
        &[
            "eval",
            "--config",
            "c.toml",
            "--snapshot",
            "r/wiring_0.json",
            "--trial",
            "bad.json",
        ],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("integrity"), "{}", stderr(&o));

    // and one that is corrupt
    wiring["neurons"] = serde_json::json!([[[1, 2]]]);
    fs::write(dir.path().join("w.json"), wiring.to_string()).unwrap();
    let o = wta(
        dir.path(),
        &[
            "eval",
            "--config",
            "c.toml",
            "--snapshot",
            "w.json",
            "--trial",
            "r/trial_0.json",
        ],
    );
    assert!(!o.status.success());
}
