use std::path::Path;
use std::process::{Command, Output};

fn memrlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memrlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("MEMRLAB_WORKERS")
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn help_lists_the_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = memrlab(&["--help"], dir.path());
    assert!(out.status.success());
    let help = text(&out.stdout);
    for sub in ["run", "verify", "print-config"] {
        assert!(help.contains(sub), "{help}");
    }
}

#[test]
fn print_config_round_trips_and_applies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = memrlab(&["print-config", "--seed", "7", "--N", "1,3", "--methods", "exact,cmine"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let printed = text(&out.stdout);
    assert!(printed.contains("seed = 7"), "{printed}");
    assert!(printed.contains("N_grid = [1, 3]"), "{printed}");
    std::fs::write(dir.path().join("c.toml"), &printed).unwrap();
    let again = memrlab(&["print-config", "--config", "c.toml"], dir.path());
    assert_eq!(text(&again.stdout), printed);
}

#[test]
fn run_writes_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = memrlab(
        &["run", "--experiment", "logistic", "--N", "1,2", "--m", "1", "--replicates", "1", "--out", "r.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("experiment,method,quantity,N,m,replicate,seed,value_nats,std_error,provenance,wall_ms,status")
    );
    assert_eq!(lines.count(), 22);
}

#[test]
fn failed_cells_give_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = memrlab(
        &["run", "--experiment", "logistic", "--methods", "lsbml", "--N", "1", "--replicates", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&std::fs::read(dir.path().join("results.csv")).unwrap()).contains("error:capability"));
}

#[test]
fn unknown_config_keys_exit_with_two_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[cmine]\nn_sample = 10\n").unwrap();
    let out = memrlab(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("cmine.n_sample"), "{}", text(&out.stderr));
    assert!(!dir.path().join("results.csv").exists());
    let out = memrlab(&["run", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_on_a_small_logistic_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = memrlab(&["verify", "--experiment", "logistic", "--N", "1,2"], dir.path());
    assert!(out.status.success(), "{}{}", text(&out.stdout), text(&out.stderr));
    assert!(text(&out.stdout).contains("pass"));
}

#[test]
fn workers_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_memrlab"))
        .args(["print-config"])
        .current_dir(dir.path())
        .env("MEMRLAB_WORKERS", "3")
        .output()
        .unwrap();
    assert!(text(&out.stdout).contains("workers = 3"));
    let out = Command::new(env!("CARGO_BIN_EXE_memrlab"))
        .args(["print-config", "--workers", "2"])
        .current_dir(dir.path())
        .env("MEMRLAB_WORKERS", "3")
        .output()
        .unwrap();
    assert!(text(&out.stdout).contains("workers = 2"));
}
