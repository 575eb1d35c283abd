use std::fs;
use std::process::{Command, Output};

use tempfile::tempdir;

fn blindgain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blindgain"))
        .args(args)
        .env_remove("MIMO_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = r#"{
  "M": 16, "K": 4,
  "rho_db_grid": [0, 10],
  "T_grid": [20, "inf"],
  "betas": "uniform:1.0",
  "models": ["rayleigh", "keyhole"],
  "estimators": ["statistical", "pilot_lmmse", "blind"],
  "trials": 200,
  "seed": 5
}"#;

#[test]
fn no_arguments_is_a_usage_error() {
    let o = blindgain(&[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(blindgain(&["--help"]).status.code(), Some(0));
    assert_eq!(blindgain(&["sweep", "--help"]).status.code(), Some(0));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(blindgain(&["moments", "--M", "10", "--bogus"]).status.code(), Some(1));
}

#[test]
fn varrho_prints_both_models() {
    let o = blindgain(&["varrho", "--M", "100", "--K", "20", "--trials", "2000"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("rayleigh") && text.contains("1.3128e-3"), "{text}");
    assert!(text.contains("keyhole") && text.contains("2.3383e-3"), "{text}");
}

#[test]
fn varrho_rejects_single_user() {
    let o = blindgain(&["varrho", "--M", "10", "--K", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn moments_table() {
    let o = blindgain(&["moments", "--M", "2", "--model", "keyhole"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("keyhole")).unwrap();
    let fields: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(fields[1..], ["2", "12", "8"]);
}

#[test]
fn sweep_writes_csv_and_json() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, SMALL).unwrap();
    let csv = dir.path().join("out.csv");
    let json = dir.path().join("out.json");
    let per_user = dir.path().join("users.csv");
    let o = blindgain(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
        "--per-user",
        per_user.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "model,estimator,snr_db,M,K,T,trials,mse,mse_stderr,clamp_rate,seed"
    );
    // 2 models x 3 estimators x 2 SNR x 2 block lengths
    assert_eq!(lines.count(), 24);
    assert!(text.contains(",inf,"));

    let parsed: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(parsed["rows"].as_array().unwrap().len(), 24);
    assert_eq!(fs::read_to_string(&per_user).unwrap().lines().count(), 1 + 24 * 4);

    let again = blindgain(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn sweep_seed_override_changes_output() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, SMALL).unwrap();
    let a = stdout(&blindgain(&["sweep", "--config", cfg.to_str().unwrap()]));
    let b = stdout(&blindgain(&["sweep", "--config", cfg.to_str().unwrap(), "--seed", "6"]));
    assert_ne!(a, b);
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = blindgain(&["sweep", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_config_is_a_config_error() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, SMALL.replace("\"trials\": 200", "\"trials\": 0")).unwrap();
    let o = blindgain(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    fs::write(&cfg, SMALL.replace("\"seed\": 5", "\"seed\": 5, \"extra\": 1")).unwrap();
    let o = blindgain(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("missing-dir").join("out.csv");
    let o = blindgain(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, SMALL).unwrap();
    let run = |threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_blindgain"))
            .args(["sweep", "--config", cfg.to_str().unwrap()])
            .env("MIMO_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        stdout(&o)
    };
    assert_eq!(run("1"), run("3"));

    let o = Command::new(env!("CARGO_BIN_EXE_blindgain"))
        .args(["sweep", "--config", cfg.to_str().unwrap()])
        .env("MIMO_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn default_config_round_trips_through_sweep_parser() {
    let o = blindgain(&["default-config"]);
    assert_eq!(o.status.code(), Some(0));
    let cfg: blindgain::harness::SystemConfig = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(cfg, blindgain::harness::SystemConfig::default());
}

#[test]
fn validate_passes() {
    let o = blindgain(&["validate", "--trials", "5000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("[PASS]")));
}
