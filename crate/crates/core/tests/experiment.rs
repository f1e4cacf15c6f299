use memrlab::experiment::{run, run_in_memory, verify, ExperimentConfig, MethodKind, Status, CSV_HEADER};

const GOLDEN: &str = include_str!("golden/logistic_exact.csv");

fn golden_config() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        "experiment = \"logistic\"\nN_grid = [1, 2]\nm = 1\nmethods = [\"exact\"]\nreplicates = 1\nworkers = 1\n",
    )
    .unwrap()
}

/// A sweep touching every method with budgets small enough for a test.
fn tiny_sinusoid(workers: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_toml(
        r#"
        experiment = "sinusoid"
        N_grid = [1, 2]
        m = 2
        methods = ["exact", "lsbml", "cmine"]
        replicates = 2
        seed = 5
        [budgets]
        mc_draws = 60
        [lsbml]
        sgld_steps = 6
        eval_environments = 20
        [cmine]
        n_samples = 600
        [cmine.train]
        epochs = 40
        "#,
    )
    .unwrap();
    c.workers = workers;
    c
}

#[test]
fn logistic_exact_csv_matches_the_golden_file() {
    let csv = run_in_memory(&golden_config(), None).unwrap().to_csv();
    if std::env::var_os("MEMRLAB_BLESS").is_some() {
        std::fs::write(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/logistic_exact.csv"), &csv).unwrap();
    }
    assert_eq!(csv, GOLDEN);
}

#[test]
fn output_is_identical_across_runs_and_worker_counts() {
    let a = run_in_memory(&tiny_sinusoid(1), None).unwrap();
    assert_eq!(a.failures, 0, "{}", a.to_csv());
    let b = run_in_memory(&tiny_sinusoid(1), None).unwrap();
    let c = run_in_memory(&tiny_sinusoid(4), None).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_csv(), c.to_csv());
    for method in ["exact", "lsbml", "cmine", "bound"] {
        assert!(a.rows.iter().any(|r| r.method == method), "no {method} rows");
    }
}

#[test]
fn a_failing_cell_does_not_abort_the_sweep() {
    let mut c = golden_config();
    c.methods = vec![MethodKind::Exact, MethodKind::Lsbml];
    let out = run_in_memory(&c, None).unwrap();
    assert!(out.failures > 0);
    let failed: Vec<_> = out.rows.iter().filter(|r| !r.is_ok()).collect();
    assert!(failed.iter().all(|r| r.method == "lsbml" && r.status == "error:capability" && r.value.is_nan()));
    assert!(out.rows.iter().filter(|r| r.method == "exact").all(|r| r.is_ok()));
}

#[test]
fn exceeding_the_enumeration_budget_is_reported_per_cell() {
    let mut c = golden_config();
    c.budgets.enumeration_budget = 10;
    let out = run_in_memory(&c, None).unwrap();
    assert_eq!(out.failures, 2);
    assert!(out.rows.iter().all(|r| r.status == "error:capacity"));
}

#[test]
fn run_writes_the_sorted_file_and_removes_the_partial() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = golden_config();
    c.output_path = dir.path().join("nested/out.csv");
    let out = run(&c).unwrap();
    let text = std::fs::read_to_string(&c.output_path).unwrap();
    assert_eq!(text, out.to_csv());
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    assert!(!dir.path().join("nested/out.csv.partial").exists());
}

#[test]
fn vacuous_checks_are_skipped_not_passed() {
    let mut c = golden_config();
    c.n_grid = vec![1];
    let report = verify(&c);
    let mono = report.checks.iter().find(|c| c.name.contains("non-increasing in N")).unwrap();
    assert_eq!(mono.status, Status::Skipped);
    assert!(report.all_passed(), "{}", report.table());
}
