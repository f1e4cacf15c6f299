use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind, MethodKind};
use crate::bounds::{
    asymptotic_sensitivity, memr_ub_chain, memr_ub_split, mer_ub, BoundInput, BoundReport, Level, Provenance,
};
use crate::cmine::{
    bound_from_estimates, estimate_mi, estimate_mi_from, gaussian_pair_dataset, MiEstimate, MiTarget, FUNCTIONAL,
};
use crate::error::{Error, Result};
use crate::exact::{LogisticExact, Quantity, RiskReport, SinusoidExact};
use crate::lsbml::empirical_meta_risk;
use crate::model::HierarchicalModel;
use crate::rng::stream_id;

pub const CSV_HEADER: &str =
    "experiment,method,quantity,N,m,replicate,seed,value_nats,std_error,provenance,wall_ms,status";

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: &'static str,
    pub method: &'static str,
    pub quantity: String,
    pub n_tasks: usize,
    pub m: usize,
    pub replicate: usize,
    pub seed: u64,
    pub value: f64,
    pub std_error: f64,
    pub provenance: String,
    pub wall_ms: u64,
    /// `ok`, or `error:<kind>` for a failed cell.
    pub status: String,
}

impl Row {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn sort_key(&self) -> (&str, &str, &str, usize, usize, usize, &str) {
        (
            self.experiment,
            self.method,
            &self.quantity,
            self.n_tasks,
            self.m,
            self.replicate,
            &self.provenance,
        )
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.method,
            self.quantity,
            self.n_tasks,
            self.m,
            self.replicate,
            self.seed,
            self.value,
            self.std_error,
            self.provenance,
            self.wall_ms,
            self.status
        )
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Argument(_) => "argument",
        Error::Domain { .. } => "domain",
        Error::Capacity { .. } => "capacity",
        Error::Capability(_) => "capability",
        Error::Numeric(_) => "numeric",
        Error::Divergence { .. } => "divergence",
        Error::EstimationFailure(_) => "estimation_failure",
        Error::Config { .. } => "config",
        Error::Io(_) => "io",
    }
}

/// A unit of work; cells run concurrently and never abort each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    ExactLogistic { n: usize },
    ExactSinusoid { replicate: usize },
    Lsbml { n: usize, replicate: usize },
    CmineHyper { n: usize, replicate: usize },
    CmineParam { target: MiTarget, replicate: usize },
    Calibration { rho: usize, replicate: usize },
    Unsupported { method: MethodKind },
}

impl Cell {
    fn method(&self) -> MethodKind {
        match self {
            Cell::ExactLogistic { .. } | Cell::ExactSinusoid { .. } => MethodKind::Exact,
            Cell::Lsbml { .. } => MethodKind::Lsbml,
            Cell::CmineHyper { .. } | Cell::CmineParam { .. } | Cell::Calibration { .. } => MethodKind::Cmine,
            Cell::Unsupported { method } => *method,
        }
    }

    fn coords(&self) -> (usize, usize) {
        match *self {
            Cell::ExactLogistic { n } => (n, 0),
            Cell::ExactSinusoid { replicate } | Cell::Calibration { replicate, .. } => (0, replicate),
            Cell::Lsbml { n, replicate } | Cell::CmineHyper { n, replicate } => (n, replicate),
            Cell::CmineParam { replicate, .. } => (0, replicate),
            Cell::Unsupported { .. } => (0, 0),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Cell::ExactLogistic { .. } | Cell::ExactSinusoid { .. } => "exact",
            Cell::Lsbml { .. } => "memr",
            Cell::CmineHyper { .. } => Quantity::MiHyperMeta.as_str(),
            Cell::CmineParam { target, .. } => target.quantity().as_str(),
            Cell::Calibration { .. } => "gaussian_mi",
            Cell::Unsupported { .. } => "unsupported",
        }
    }
}

fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    let reps = 0..config.replicates;
    for &method in &config.methods {
        match (config.experiment, method) {
            (ExperimentKind::Logistic, MethodKind::Exact) => {
                out.extend(config.n_grid.iter().map(|&n| Cell::ExactLogistic { n }));
            }
            (ExperimentKind::Sinusoid, MethodKind::Exact) => {
                out.extend(reps.clone().map(|replicate| Cell::ExactSinusoid { replicate }));
            }
            (ExperimentKind::Sinusoid | ExperimentKind::Logistic, MethodKind::Lsbml) => {
                for replicate in reps.clone() {
                    // N = 0 is the conventional-learning baseline (MER)
                    out.push(Cell::Lsbml { n: 0, replicate });
                    out.extend(config.n_grid.iter().map(|&n| Cell::Lsbml { n, replicate }));
                }
            }
            (ExperimentKind::Sinusoid | ExperimentKind::Logistic, MethodKind::Cmine) => {
                for replicate in reps.clone() {
                    out.push(Cell::CmineParam {
                        target: MiTarget::ParamGivenHyper,
                        replicate,
                    });
                    out.push(Cell::CmineParam {
                        target: MiTarget::ParamData,
                        replicate,
                    });
                    out.extend(config.n_grid.iter().map(|&n| Cell::CmineHyper { n, replicate }));
                }
            }
            (ExperimentKind::Calibration, MethodKind::Cmine) => {
                for rho in 0..config.calibration.rhos.len() {
                    out.extend(reps.clone().map(|replicate| Cell::Calibration { rho, replicate }));
                }
            }
            (ExperimentKind::Calibration, MethodKind::Exact) => {}
            (ExperimentKind::Calibration, MethodKind::Lsbml) => out.push(Cell::Unsupported { method }),
        }
    }
    out
}

/// Seed of a replicate for estimators that take a single seed.
fn replicate_seed(seed: u64, replicate: usize) -> u64 {
    stream_id(&[seed, replicate as u64])
}

struct Emitter<'a> {
    config: &'a ExperimentConfig,
    method: &'static str,
    replicate: usize,
    rows: Vec<Row>,
}

impl Emitter<'_> {
    fn push(&mut self, quantity: &str, n: usize, m: usize, value: f64, std_error: f64, provenance: &str) {
        self.rows.push(Row {
            experiment: self.config.experiment.as_str(),
            method: self.method,
            quantity: quantity.to_string(),
            n_tasks: n,
            m,
            replicate: self.replicate,
            seed: self.config.seed,
            value,
            std_error,
            provenance: provenance.to_string(),
            wall_ms: 0,
            status: "ok".into(),
        });
    }

    /// The genie risk is left out: it is `bayes_risk - memr`.
    fn report(&mut self, r: &RiskReport) {
        if r.quantity == Quantity::GenieRisk {
            return;
        }
        let prov = format!("exact:{}", r.method.as_str());
        self.push(r.quantity.as_str(), r.n_tasks, r.m, r.value, r.std_error, &prov);
    }

    fn bound(&mut self, b: &BoundReport<f64>, std_error: f64) {
        let method = std::mem::replace(&mut self.method, "bound");
        self.push(b.kind.as_str(), b.n_tasks, b.m, b.value, std_error, &b.provenance_label());
        self.method = method;
    }
}

fn exact_input(reports: &[RiskReport], q: Quantity) -> Result<BoundInput<f64>> {
    let r = reports
        .iter()
        .find(|r| r.quantity == q)
        .ok_or_else(|| Error::Argument(format!("missing {q}")))?;
    Ok(BoundInput {
        quantity: q,
        // MC estimates of non-negative terms can dip below zero
        value: r.value.max(0.0),
        provenance: Provenance::Exact,
    })
}

fn std_error_of(reports: &[RiskReport], q: Quantity) -> f64 {
    reports.iter().find(|r| r.quantity == q).map_or(0.0, |r| r.std_error)
}

/// Bound rows from exact MI values at one `(N, m)`.
fn exact_bounds(e: &mut Emitter<'_>, reports: &[RiskReport], n: usize, m: usize) -> Result<()> {
    let (nf, mf) = (n as f64, m as f64);
    let split = memr_ub_split(
        exact_input(reports, Quantity::MiHyperMeta)?,
        exact_input(reports, Quantity::MiParamGivenHyper)?,
        n,
        m,
    )?;
    let se = (std_error_of(reports, Quantity::MiHyperMeta) / (nf * mf)).hypot(std_error_of(reports, Quantity::MiParamGivenHyper) / mf);
    e.bound(&split, se);
    let chain = memr_ub_chain(exact_input(reports, Quantity::MiParamGivenMetadata)?, n, m)?;
    e.bound(&chain, std_error_of(reports, Quantity::MiParamGivenMetadata) / mf);
    let mut mer = mer_ub(exact_input(reports, Quantity::MiParamData)?, m)?;
    // listed at every N, like the MER itself
    mer.n_tasks = n;
    e.bound(&mer, std_error_of(reports, Quantity::MiParamData) / mf);
    Ok(())
}

fn run_cell(config: &ExperimentConfig, cell: Cell) -> Result<Vec<Row>> {
    let (_, replicate) = cell.coords();
    let mut e = Emitter {
        config,
        method: cell.method().as_str(),
        replicate,
        rows: Vec::new(),
    };
    let m = config.m;
    let model: &dyn HierarchicalModel = match config.experiment {
        ExperimentKind::Logistic => &config.logistic,
        _ => &config.sinusoid,
    };
    match cell {
        Cell::ExactLogistic { n } => {
            let exact = LogisticExact::new(&config.logistic, &config.budgets)?;
            let reports = exact.all(n, m)?;
            for r in &reports {
                e.report(r);
            }
            exact_bounds(&mut e, &reports, n, m)?;
        }
        Cell::ExactSinusoid { replicate } => {
            let exact = SinusoidExact::new(&config.sinusoid, &config.budgets)?;
            let all = exact.report_many(&config.n_grid, m, config.seed, replicate as u64)?;
            for (report, &n) in all.iter().zip(&config.n_grid) {
                for r in &report.reports {
                    e.report(r);
                }
                exact_bounds(&mut e, &report.reports, n, m)?;
                for level in [Level::Hyper, Level::Param] {
                    e.bound(&asymptotic_sensitivity(&config.sinusoid, level, n, m, config.budgets.hyper_nodes)?, 0.0);
                }
            }
        }
        Cell::Lsbml { n, replicate } => {
            let l = &config.lsbml;
            let r = empirical_meta_risk(
                model,
                l,
                n,
                m,
                l.eval_test_points,
                l.eval_environments,
                config.seed,
                replicate as u64,
            )?;
            let targets: Vec<usize> = if n == 0 { config.n_grid.clone() } else { vec![n] };
            for &t in &targets {
                if n == 0 {
                    e.push(Quantity::Mer.as_str(), t, m, r.paired_excess.value, r.paired_excess.std_error, "lsbml");
                } else {
                    e.push(Quantity::Memr.as_str(), t, m, r.paired_excess.value, r.paired_excess.std_error, "lsbml");
                    e.push(Quantity::BayesRisk.as_str(), t, m, r.bayes_risk.value, r.bayes_risk.std_error, "lsbml");
                }
            }
        }
        Cell::CmineHyper { n, replicate } => {
            let est = estimate_mi(model, MiTarget::HyperMeta, n, m, &config.cmine, replicate_seed(config.seed, replicate))?;
            push_estimate(&mut e, MiTarget::HyperMeta, &est, n, m);
        }
        Cell::CmineParam { target, replicate } => {
            let est = estimate_mi(model, target, 0, m, &config.cmine, replicate_seed(config.seed, replicate))?;
            for &n in &config.n_grid {
                push_estimate(&mut e, target, &est, n, m);
            }
        }
        Cell::Calibration { rho, replicate } => {
            let r = config.calibration.rhos[rho];
            let seed = replicate_seed(config.seed, replicate);
            let data = gaussian_pair_dataset(r, config.cmine.n_samples, seed)?;
            let est = estimate_mi_from(&data, &config.cmine, seed, &[])?;
            e.push(&calibration_quantity(r), 0, 0, est.value, est.std_error, &cmine_provenance(&est));
        }
        Cell::Unsupported { method } => {
            return Err(Error::Capability(format!(
                "method {} for the {} experiment",
                method.as_str(),
                config.experiment.as_str()
            )));
        }
    }
    Ok(e.rows)
}

fn calibration_quantity(rho: f64) -> String {
    format!("gaussian_mi_rho_{rho:.2}")
}

fn cmine_provenance(est: &MiEstimate) -> String {
    format!("cmine:{}:{}", FUNCTIONAL, est.protocol.as_str())
}

fn push_estimate(e: &mut Emitter<'_>, target: MiTarget, est: &MiEstimate, n: usize, m: usize) {
    e.push(target.quantity().as_str(), n, m, est.value, est.std_error, &cmine_provenance(est));
}

/// Rows that need several cells: C-MINE bounds, closed-form calibration
/// values.
fn derived_rows(config: &ExperimentConfig, rows: &[Row]) -> Vec<Row> {
    let mut e = Emitter {
        config,
        method: "cmine",
        replicate: 0,
        rows: Vec::new(),
    };
    if config.experiment == ExperimentKind::Calibration {
        if config.methods.contains(&MethodKind::Exact) || config.methods.contains(&MethodKind::Cmine) {
            e.method = "exact";
            for &rho in &config.calibration.rhos {
                e.push(&calibration_quantity(rho), 0, 0, -0.5 * (1.0 - rho * rho).ln(), 0.0, "exact:closed_form");
            }
        }
        return e.rows;
    }
    let find = |q: Quantity, n: usize, rep: usize| {
        rows.iter().find(|r| {
            r.method == "cmine" && r.is_ok() && r.quantity == q.as_str() && r.n_tasks == n && r.replicate == rep
        })
    };
    let as_est = |r: &Row| MiEstimate {
        value: r.value,
        std_error: r.std_error,
        n_samples: config.cmine.n_samples,
        splits: config.cmine.splits,
        protocol: config.cmine.protocol,
        diagnostics: crate::cmine::Diagnostics {
            train_accuracy: f64::NAN,
            ratio_clip_fraction: f64::NAN,
        },
        negative: r.value < 0.0,
    };
    let m = config.m;
    for rep in 0..config.replicates {
        e.replicate = rep;
        for &n in &config.n_grid {
            if let (Some(h), Some(p)) = (find(Quantity::MiHyperMeta, n, rep), find(Quantity::MiParamGivenHyper, n, rep)) {
                if let Ok(b) = bound_from_estimates(&as_est(h), &as_est(p), n, m) {
                    let se = (h.std_error / (n * m) as f64).hypot(p.std_error / m as f64);
                    e.bound(&b, se);
                }
            }
            if let Some(d) = find(Quantity::MiParamData, n, rep) {
                let input = BoundInput {
                    quantity: Quantity::MiParamData,
                    value: d.value.max(0.0),
                    provenance: Provenance::Cmine,
                };
                if let Ok(mut b) = mer_ub(input, m) {
                    b.n_tasks = n;
                    e.bound(&b, d.std_error / m as f64);
                }
            }
        }
    }
    e.rows
}

fn failure_row(config: &ExperimentConfig, cell: Cell, err: &Error) -> Row {
    let (n, replicate) = cell.coords();
    Row {
        experiment: config.experiment.as_str(),
        method: cell.method().as_str(),
        quantity: cell.label().to_string(),
        n_tasks: n,
        m: config.m,
        replicate,
        seed: config.seed,
        value: f64::NAN,
        std_error: f64::NAN,
        provenance: "-".into(),
        wall_ms: 0,
        status: format!("error:{}", error_kind(err)),
    }
}

/// Rows of a finished sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub rows: Vec<Row>,
    pub failures: usize,
}

impl RunOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn find(&self, method: &str, quantity: &str, n: usize) -> Vec<&Row> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.quantity == quantity && r.n_tasks == n)
            .collect()
    }
}

fn partial_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".partial");
    PathBuf::from(p)
}

/// Runs every cell on a pool of `config.workers` threads. Rows are appended
/// to `<output>.partial` as cells finish, then sorted into the output file.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let outcome = run_in_memory(config, Some(&partial_path(&config.output_path)))?;
    write_csv(&outcome, &config.output_path)?;
    let _ = std::fs::remove_file(partial_path(&config.output_path));
    Ok(outcome)
}

/// As [`run`] without touching the file system unless `partial` is given.
pub fn run_in_memory(config: &ExperimentConfig, partial: Option<&Path>) -> Result<RunOutcome> {
    config.validate()?;
    let sink = match partial {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut w = BufWriter::new(File::create(p)?);
            writeln!(w, "{CSV_HEADER}")?;
            Some(Mutex::new(w))
        }
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.effective_workers())
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    let work = cells(config);
    let results: Vec<(Vec<Row>, bool)> = pool.install(|| {
        work.par_iter()
            .map(|&cell| {
                let start = Instant::now();
                let (mut rows, ok) = match run_cell(config, cell) {
                    Ok(rows) => (rows, true),
                    Err(err) => {
                        log::error!("{} cell {:?} failed: {err}", config.experiment.as_str(), cell);
                        (vec![failure_row(config, cell, &err)], false)
                    }
                };
                if config.record_wall_time {
                    let ms = start.elapsed().as_millis() as u64;
                    rows.iter_mut().for_each(|r| r.wall_ms = ms);
                }
                if let Some(sink) = &sink {
                    let mut w = sink.lock().unwrap_or_else(|p| p.into_inner());
                    for r in &rows {
                        let _ = writeln!(w, "{}", r.to_csv());
                    }
                    let _ = w.flush();
                }
                (rows, ok)
            })
            .collect()
    });
    let failures = results.iter().filter(|(_, ok)| !ok).count();
    let mut rows: Vec<Row> = results.into_iter().flat_map(|(r, _)| r).collect();
    rows.extend(derived_rows(config, &rows));
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(RunOutcome { rows, failures })
}

pub fn write_csv(outcome: &RunOutcome, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, outcome.to_csv())?;
    Ok(())
}
