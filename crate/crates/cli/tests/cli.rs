//! Smoke tests for the command-line front end.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_d2d-sched"))
}

fn desk() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.cfg")
}

fn run(args: &[&str], out: &std::path::Path) -> Output {
    bin().arg("--config").arg(desk()).args(args).arg("--out").arg(out).output().unwrap()
}

#[test]
fn help_lists_config_keys() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["v_weight", "t_p_slots", "gamma_th_db", "path_loss_model"] {
        assert!(text.contains(key), "missing {key}");
    }
}

#[test]
fn unknown_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["--set", "no_such_key=1", "gen-scenario"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn bad_policy_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["run", "--policy", "greedy", "--slots", "10"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_scenario_writes_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen-scenario"], dir.path());
    assert!(out.status.success());
    let pairs = std::fs::read_to_string(dir.path().join("pairs.csv")).unwrap();
    let mut lines = pairs.lines();
    assert_eq!(lines.next(), Some("id,distance_m,path_loss_db"));
    assert_eq!(lines.count(), 10);
    assert!(dir.path().join("effective_config.txt").exists());
}

#[test]
fn single_slot_run_with_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["run", "--policy", "ideal", "--slots", "1", "--realizations", "1", "--warmup", "0", "--trace"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let runs = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 2);
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
    assert!(!dir.path().join("summary.csv").exists());
}

#[test]
fn collision_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["collision", "--draws", "20000"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("collision.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("n_pairs,k2,p_collision_exact"));
    let exact: f64 = rows[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&exact));
}

#[test]
fn seed_flag_changes_the_drop() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&["--seed", "11", "gen-scenario"], a.path());
    run(&["--seed", "12", "gen-scenario"], b.path());
    let read = |d: &tempfile::TempDir| std::fs::read_to_string(d.path().join("pairs.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
}
