use std::f64::consts::FRAC_PI_2;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{ExperimentConfig, ExperimentKind, MethodKind};
use super::run::error_kind;
use crate::bounds::{Level, SinusoidAsymptotics};
use crate::cmine::{estimate_mi_from, gaussian_pair_dataset, MlpClassifier};
use crate::error::Result;
use crate::exact::{LogisticExact, Quantity, RiskReport, SinusoidExact};
use crate::lsbml::{predictive_particles, LsBmlConfig, ParticleEnsemble};
use crate::model::{DiscreteLogisticModel, HierarchicalModel, HyperSupport, Sample, SinusoidModel};
use crate::rng::{label_id, stream, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Pass,
    Fail,
    /// Vacuous for this configuration.
    Skipped,
    /// The check could not run; carries the error kind.
    Error(&'static str),
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Pass => f.write_str("pass"),
            Status::Fail => f.write_str("FAIL"),
            Status::Skipped => f.write_str("skipped"),
            Status::Error(kind) => write!(f, "ERROR({kind})"),
        }
    }
}

/// One line of the verification table. `margin` is the smallest slack
/// (positive = satisfied) over everything the check compared.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub margin: f64,
    pub detail: String,
}

impl Check {
    fn from_margin(name: impl Into<String>, margin: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: if margin >= 0.0 { Status::Pass } else { Status::Fail },
            margin,
            detail: detail.into(),
        }
    }

    fn skipped(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: Status::Skipped,
            margin: f64::NAN,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    /// Passed or skipped everywhere.
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| matches!(c.status, Status::Pass | Status::Skipped))
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$}  {:<9}  {:>12}  detail\n", "check", "status", "margin");
        for c in &self.checks {
            out.push_str(&format!(
                "{:<width$}  {:<9}  {:>12.4e}  {}\n",
                c.name,
                c.status.to_string(),
                c.margin,
                c.detail
            ));
        }
        out
    }
}

fn guarded(name: &str, f: impl FnOnce() -> Result<Check>) -> Check {
    f().unwrap_or_else(|e| Check {
        name: name.to_string(),
        status: Status::Error(error_kind(&e)),
        margin: f64::NAN,
        detail: e.to_string(),
    })
}

/// Largest relative disagreement between analytic gradients and central
/// differences, with the number of points compared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub worst_relative: f64,
    pub points: usize,
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn central(f: impl Fn(f64) -> Result<f64>, x: f64) -> Result<f64> {
    central_with(f, x, 1e-5 * x.abs().max(1e-2))
}

fn central_with(f: impl Fn(f64) -> Result<f64>, x: f64, h: f64) -> Result<f64> {
    Ok((f(x + h)? - f(x - h)?) / (2.0 * h))
}

/// Checks every analytic gradient of `model` at `points` random points.
pub fn model_gradient_check(model: &dyn HierarchicalModel, points: usize, seed: u64) -> Result<GradientCheck> {
    let mut rng = stream(seed, &[label_id(model.name()), Purpose::Oracle as u64]);
    let continuous = model.hyper_support() != HyperSupport::Discrete;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let u = model.sample_hyper(&mut rng);
        let w: Vec<f64> = if continuous {
            model.sample_param(&u, &mut rng)
        } else {
            // the likelihood is smooth in w even though the prior is discrete
            vec![rng.random_range(-2.0..2.0)]
        };
        let x = model.sample_input(&mut rng);
        let y = model.sample_label(x, &w, &mut rng);
        let g = model.grad_w_ln_likelihood(y, x, &w)?;
        let fd = central(|v| model.ln_likelihood(y, x, &[v]), w[0])?;
        worst = worst.max(rel_err(g[0], fd));
        if continuous {
            let g = model.grad_w_ln_prior(&w, &u)?;
            worst = worst.max(rel_err(g[0], central(|v| model.ln_prior(&[v], &u), w[0])?));
            let g = model.grad_u_ln_prior(&w, &u)?;
            worst = worst.max(rel_err(g[0], central(|v| model.ln_prior(&w, &[v]), u[0])?));
            let g = model.grad_u_ln_hyperprior(&u)?;
            worst = worst.max(rel_err(g[0], central(|v| model.ln_hyperprior(&[v]), u[0])?));
        }
    }
    Ok(GradientCheck {
        worst_relative: worst,
        points,
    })
}

/// Backpropagation against central differences on `[1, 3, 1]` networks.
pub fn backprop_gradient_check(points: usize, seed: u64) -> Result<GradientCheck> {
    let mut rng = stream(seed, &[label_id("backprop"), Purpose::Oracle as u64]);
    let mut worst: f64 = 0.0;
    for i in 0..points {
        let net = MlpClassifier::<f64>::new(&[1, 3, 1], &mut rng)?;
        let x: f64 = StandardNormal.sample(&mut rng);
        let xs = [[x]];
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let ys = [(i % 2) as f64];
        let (_, g) = net.loss_and_grad(&refs, &ys, 1e-3);
        let flat: Vec<f64> = g
            .weights
            .iter()
            .zip(&g.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied().collect::<Vec<_>>())
            .collect();
        let p0 = net.params();
        for (j, &analytic) in flat.iter().enumerate() {
            let f = |v: f64| -> Result<f64> {
                let mut n = net.clone();
                let mut p = p0.clone();
                p[j] = v;
                n.set_params(&p);
                Ok(n.loss(&refs, &ys, 1e-3))
            };
            worst = worst.max(rel_err(analytic, central_with(f, p0[j], 1e-5)?));
        }
    }
    Ok(GradientCheck {
        worst_relative: worst,
        points,
    })
}

/// Runs the invariant suite relevant to the configured experiment and
/// methods.
pub fn verify(config: &ExperimentConfig) -> VerifyReport {
    let mut checks = Vec::new();
    let tol = 1e-4;
    for (name, model) in [
        ("gradients: sinusoid model", &config.sinusoid as &dyn HierarchicalModel),
        ("gradients: logistic likelihood", &config.logistic as &dyn HierarchicalModel),
    ] {
        checks.push(guarded(name, || {
            let g = model_gradient_check(model, 100, config.seed)?;
            Ok(Check::from_margin(name, tol - g.worst_relative, format!("worst rel err {:.2e} over {} points", g.worst_relative, g.points)))
        }));
    }
    checks.push(guarded("gradients: classifier backprop", || {
        let g = backprop_gradient_check(100, config.seed)?;
        Ok(Check::from_margin(
            "gradients: classifier backprop",
            tol - g.worst_relative,
            format!("worst rel err {:.2e} over {} nets", g.worst_relative, g.points),
        ))
    }));
    match config.experiment {
        ExperimentKind::Logistic => logistic_checks(config, &mut checks),
        ExperimentKind::Sinusoid => sinusoid_checks(config, &mut checks),
        ExperimentKind::Calibration => {}
    }
    if config.methods.contains(&MethodKind::Cmine) || config.experiment == ExperimentKind::Calibration {
        calibration_checks(config, &mut checks);
    }
    if config.methods.contains(&MethodKind::Lsbml) {
        checks.push(guarded("lsbml: SVGD conjugate posterior", || svgd_check(&config.sinusoid, config.seed)));
    }
    VerifyReport { checks }
}

fn value(reports: &[RiskReport], q: Quantity) -> f64 {
    reports.iter().find(|r| r.quantity == q).map_or(f64::NAN, |r| r.value)
}

fn logistic_checks(config: &ExperimentConfig, checks: &mut Vec<Check>) {
    let model: &DiscreteLogisticModel = &config.logistic;
    let m = config.m;
    let exact = match LogisticExact::new(model, &config.budgets) {
        Ok(e) => e,
        Err(e) => {
            checks.push(guarded("logistic: enumeration", || Err(e)));
            return;
        }
    };
    checks.push(guarded("logistic: sandwich chain", || {
        let mut margin = f64::INFINITY;
        for &n in &config.n_grid {
            let r = exact.all(n, m)?;
            let (nf, mf) = (n as f64, m as f64);
            let memr = value(&r, Quantity::Memr);
            let chain = value(&r, Quantity::MiParamGivenMetadata) / mf;
            let split = value(&r, Quantity::MiHyperMeta) / (nf * mf) + value(&r, Quantity::MiParamGivenHyper) / mf;
            margin = margin.min(memr).min(chain - memr).min(split - chain);
        }
        Ok(Check::from_margin("logistic: sandwich chain", margin + 1e-9, format!("N in {:?}, m = {m}", config.n_grid)))
    }));
    checks.push(guarded("logistic: MER - MEMR identity", || {
        let mut worst: f64 = 0.0;
        for &n in &config.n_grid {
            let r = exact.all(n, m)?;
            let lhs = value(&r, Quantity::Mer) - value(&r, Quantity::Memr);
            worst = worst.max((lhs - value(&r, Quantity::MetaGain)).abs());
        }
        Ok(Check::from_margin("logistic: MER - MEMR identity", 1e-10 - worst, format!("max |diff| {worst:.2e}")))
    }));
    checks.push(guarded("logistic: N = 0 reduction", || {
        let r = exact.all(0, m)?;
        let d = (value(&r, Quantity::Memr) - value(&r, Quantity::Mer)).abs();
        Ok(Check::from_margin("logistic: N = 0 reduction", 1e-12 - d, format!("|MEMR - MER| {d:.2e}")))
    }));
    checks.push(monotone_in_n("logistic: MEMR non-increasing in N", config, |n| {
        Ok((exact.quantity(Quantity::Memr, n, m)?.value, 1e-9))
    }));
    checks.push(guarded("logistic: MEMR non-increasing in m", || {
        let n = config.n_grid[0];
        let ms = [1, 2, 4];
        let vals = ms.iter().map(|&mm| Ok(exact.quantity(Quantity::Memr, n, mm)?.value)).collect::<Result<Vec<_>>>()?;
        let margin = vals.windows(2).map(|w| w[0] - w[1] + 1e-9).fold(f64::INFINITY, f64::min);
        Ok(Check::from_margin("logistic: MEMR non-increasing in m", margin, format!("N = {n}, m in {ms:?}")))
    }));
}

fn monotone_in_n(name: &str, config: &ExperimentConfig, f: impl Fn(usize) -> Result<(f64, f64)>) -> Check {
    let mut grid = config.n_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    if grid.len() < 2 {
        return Check::skipped(name, "needs at least two task counts");
    }
    guarded(name, || {
        let vals = grid.iter().map(|&n| f(n)).collect::<Result<Vec<_>>>()?;
        let margin = vals
            .windows(2)
            .map(|w| w[0].0 - w[1].0 + w[0].1.hypot(w[1].1))
            .fold(f64::INFINITY, f64::min);
        Ok(Check::from_margin(name, margin, format!("N in {grid:?}")))
    })
}

fn sinusoid_checks(config: &ExperimentConfig, checks: &mut Vec<Check>) {
    let model: &SinusoidModel = &config.sinusoid;
    let m = config.m;
    let exact = match SinusoidExact::new(model, &config.budgets) {
        Ok(e) => e,
        Err(e) => {
            checks.push(guarded("sinusoid: quadrature", || Err(e)));
            return;
        }
    };
    let reports = match exact.report_many(&config.n_grid, m, config.seed, 0) {
        Ok(r) => r,
        Err(e) => {
            checks.push(guarded("sinusoid: exact MEMR", || Err(e)));
            return;
        }
    };
    let get = |i: usize, q| reports[i].get(q).copied().expect("reported quantity");
    let mut margin = f64::INFINITY;
    for (i, &n) in config.n_grid.iter().enumerate() {
        let (nf, mf) = (n as f64, m as f64);
        let memr = get(i, Quantity::Memr);
        let chain = get(i, Quantity::MiParamGivenMetadata);
        let hyper = get(i, Quantity::MiHyperMeta);
        let param = get(i, Quantity::MiParamGivenHyper);
        let split = hyper.value / (nf * mf) + param.value / mf;
        margin = margin
            .min(memr.value + memr.tolerance())
            .min(chain.value / mf - memr.value + memr.tolerance() + chain.tolerance() / mf)
            .min(split - chain.value / mf + chain.tolerance() / mf + hyper.tolerance() / (nf * mf));
    }
    checks.push(Check::from_margin("sinusoid: sandwich chain (3 s.e.)", margin, format!("N in {:?}, m = {m}", config.n_grid)));
    let index = |n: usize| config.n_grid.iter().position(|&k| k == n).expect("grid entry");
    checks.push(monotone_in_n("sinusoid: MEMR non-increasing in N (3 s.e.)", config, |n| {
        let r = get(index(n), Quantity::Memr);
        Ok((r.value, 3.0 * r.std_error))
    }));
    checks.push(guarded("sinusoid: N = 0 reduction", || {
        let d = (exact.memr(0, m, config.seed, 0)?.value - get(0, Quantity::Mer).value).abs();
        Ok(Check::from_margin("sinusoid: N = 0 reduction", 1e-12 - d, format!("|MEMR - MER| {d:.2e}")))
    }));
    checks.push(guarded("sinusoid: KL recurrence vs direct", || {
        let mut rng = stream(config.seed, &[label_id("kl-check"), Purpose::Oracle as u64]);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let mixture: Vec<(f64, f64, f64)> = (0..5)
                .map(|_| (rng.random_range(0.05..1.0), rng.random_range(-0.3..0.3), rng.random_range(0.005..0.05)))
                .collect();
            let total: f64 = mixture.iter().map(|c| c.0).sum();
            let mixture: Vec<_> = mixture.into_iter().map(|(w, a, b)| (w / total, a, b)).collect();
            let mean = rng.random_range(-0.3..0.3);
            worst = worst.max((exact.kl_to_mixture(mean, &mixture) - exact.kl_to_mixture_direct(mean, &mixture)).abs());
        }
        Ok(Check::from_margin("sinusoid: KL recurrence vs direct", 1e-9 - worst, format!("max |diff| {worst:.2e}")))
    }));
    checks.push(guarded("sinusoid: asymptotic gap shrinks in m", || {
        let a = SinusoidAsymptotics::new(model, config.budgets.hyper_nodes)?;
        let gaps: Vec<f64> = [10, 100, 1000]
            .iter()
            .map(|&mm| (a.mi_param_given_hyper(mm) - a.rhs(Level::Param, mm, mm)).abs())
            .collect();
        let margin = gaps.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
        Ok(Check::from_margin("sinusoid: asymptotic gap shrinks in m", margin, format!("gaps {:.3e} {:.3e} {:.3e}", gaps[0], gaps[1], gaps[2])))
    }));
}

fn calibration_checks(config: &ExperimentConfig, checks: &mut Vec<Check>) {
    for (rho, tol) in [(0.8f64, 0.1), (0.0, 0.05)] {
        let name = format!("cmine: Gaussian rho = {rho} (5 seeds)");
        checks.push(guarded(&name, || {
            let truth = -0.5 * (1.0 - rho * rho).ln();
            let mut sum = 0.0;
            for seed in 0..5u64 {
                let s = config.seed.wrapping_add(seed);
                let data = gaussian_pair_dataset(rho, config.cmine.n_samples, s)?;
                sum += estimate_mi_from(&data, &config.cmine, s, &[])?.value;
            }
            let est = sum / 5.0;
            Ok(Check::from_margin(&name, tol - (est - truth).abs(), format!("estimate {est:.4} vs {truth:.4}")))
        }));
    }
}

/// SVGD on one datum with `u = 1`, checked against the conjugate posterior.
pub fn svgd_check(model: &SinusoidModel, seed: u64) -> Result<Check> {
    let name = "lsbml: SVGD conjugate posterior";
    let data = [Sample { x: FRAC_PI_2, y: 0.5 }];
    let config = LsBmlConfig {
        particles: 20,
        svgd_steps: 200,
        ..LsBmlConfig::default()
    };
    let pred = predictive_particles(model, Some(&[vec![1.0]]), &data, &config, seed, &[label_id("svgd-check")])?;
    let e = ParticleEnsemble::new(pred.particles, 0)?;
    let s2 = model.noise_var();
    let post_var = 1.0 / (1.0 + 1.0 / s2);
    let post_mean = post_var * 0.5 / s2;
    let margin = (0.02 - (e.mean()[0] - post_mean).abs()).min(0.25 - (e.variance()[0] / post_var - 1.0).abs());
    Ok(Check::from_margin(
        name,
        margin,
        format!("mean {:.4} (exact {post_mean:.4}), var {:.5} (exact {post_var:.5})", e.mean()[0], e.variance()[0]),
    ))
}
