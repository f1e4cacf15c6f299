use rayon::prelude::*;
use rand::RngCore;

use super::sgld::{fit_task, run_lsbml_at};
use super::svgd::{svgd_step_with, ParticleEnsemble, TaskPrior};
use super::LsBmlConfig;
use crate::error::{Error, Result};
use crate::exact::{Method, Quantity, RiskReport, SinusoidExact};
use crate::model::{sample_environment_with, EnvironmentDraw, GaussStats, HierarchicalModel, Sample, SinusoidModel};
use crate::numerics::{log_sum_exp, mean_and_std_error};
use crate::rng::{label_id, stream, Purpose};

/// Equally weighted particles `w_{s,k}` defining
/// `q(y | x) = (1 / SK) Σ_{s,k} P(y | x, w_{s,k})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictive {
    pub particles: Vec<Vec<f64>>,
}

impl Predictive {
    pub fn ln_density(&self, model: &dyn HierarchicalModel, x: f64, y: f64) -> Result<f64> {
        let terms = self
            .particles
            .iter()
            .map(|w| model.ln_likelihood(y, x, w))
            .collect::<Result<Vec<_>>>()?;
        Ok(log_sum_exp(&terms) - (terms.len() as f64).ln())
    }

    pub fn density(&self, model: &dyn HierarchicalModel, x: f64, y: f64) -> Result<f64> {
        Ok(self.ln_density(model, x, y)?.exp())
    }
}

fn with_suffix(path: &[u64], rest: &[u64]) -> Vec<u64> {
    let mut p = path.to_vec();
    p.extend_from_slice(rest);
    p
}

/// Runs SVGD on the meta-test training set once per hyper sample (or, with
/// `None`, `S` times under the marginal prior `P_W`) and pools the particles.
pub fn predictive_particles(
    model: &dyn HierarchicalModel,
    hyper_samples: Option<&[Vec<f64>]>,
    test_train: &[Sample],
    config: &LsBmlConfig,
    seed: u64,
    path: &[u64],
) -> Result<Predictive> {
    config.validate()?;
    let mut particles = Vec::new();
    match hyper_samples {
        Some([]) => return Err(Error::Argument("predictive needs at least one hyperparameter sample".into())),
        Some(hs) => {
            for (s, u) in hs.iter().enumerate() {
                let mut rng = stream(seed, &with_suffix(path, &[Purpose::Predictive as u64, s as u64]));
                particles.extend(fit_task(model, test_train, u, s, config, &mut rng)?.particles);
            }
        }
        None => {
            for s in 0..config.hyper_samples_kept {
                let mut rng = stream(seed, &with_suffix(path, &[Purpose::Predictive as u64, s as u64]));
                let init: Vec<Vec<f64>> = (0..config.particles)
                    .map(|_| {
                        let u = model.sample_hyper(&mut rng as &mut dyn RngCore);
                        model.sample_param(&u, &mut rng)
                    })
                    .collect();
                let mut e = ParticleEnsemble::new(init, s)?;
                for _ in 0..config.svgd_steps {
                    e = svgd_step_with(&e, test_train, TaskPrior::Marginal, model, config.svgd_step_size)?;
                }
                particles.extend(e.particles);
            }
        }
    }
    Ok(Predictive { particles })
}

/// `q(y | x, Z, Z_{1:N})` from hyperparameter samples.
pub fn predictive_density(
    model: &dyn HierarchicalModel,
    hyper_samples: &[Vec<f64>],
    test_train: &[Sample],
    x: f64,
    y: f64,
    config: &LsBmlConfig,
    seed: u64,
) -> Result<f64> {
    predictive_particles(model, Some(hyper_samples), test_train, config, seed, &[])?.density(model, x, y)
}

/// Average log-loss of a predictor and the excess over the genie.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalRisk {
    /// Mean of `-ln q(y | x, ...)`.
    pub bayes_risk: RiskReport,
    /// `bayes_risk - H(Y | X, W)`: MEMR (MER when `N = 0`), with the standard
    /// error of `bayes_risk`.
    pub excess: RiskReport,
    /// Mean of the paired difference `-ln q(y | x, ...) + ln P(y | x, w)`:
    /// same expectation as `excess`, without the label-noise variance.
    pub paired_excess: RiskReport,
}

/// The meta-test pairs scored for one environment: the drawn test point and
/// `n_test - 1` further pairs from the same task.
fn test_points(model: &dyn HierarchicalModel, env: &EnvironmentDraw, n_test: usize, seed: u64, path: &[u64]) -> Dataset {
    let mut pts = vec![env.test_point];
    let mut rng = stream(seed, &with_suffix(path, &[Purpose::MetaTest as u64, 1]));
    for _ in 1..n_test {
        let x = model.sample_input(&mut rng);
        let y = model.sample_label(x, &env.test_param, &mut rng);
        pts.push(Sample { x, y });
    }
    pts
}

type Dataset = Vec<Sample>;

fn summarize(per_env: Vec<(f64, f64)>, genie: f64, n: usize, m: usize, method: Method) -> EmpiricalRisk {
    let (risk, risk_se) = mean_and_std_error(&per_env.iter().map(|p| p.0).collect::<Vec<_>>());
    let (paired, paired_se) = mean_and_std_error(&per_env.iter().map(|p| p.1).collect::<Vec<_>>());
    let report = |quantity, value, std_error| RiskReport {
        quantity,
        value,
        std_error,
        n_tasks: n,
        m,
        method,
    };
    let excess = if n == 0 { Quantity::Mer } else { Quantity::Memr };
    EmpiricalRisk {
        bayes_risk: report(Quantity::BayesRisk, risk, risk_se),
        excess: report(excess, risk - genie, risk_se),
        paired_excess: report(excess, paired, paired_se),
    }
}

fn score(
    model: &dyn HierarchicalModel,
    env: &EnvironmentDraw,
    ln_q: impl Fn(f64, f64) -> Result<f64>,
    n_test: usize,
    seed: u64,
    path: &[u64],
) -> Result<(f64, f64)> {
    let pts = test_points(model, env, n_test, seed, path);
    let (mut loss, mut excess) = (0.0, 0.0);
    for p in &pts {
        let lq = ln_q(p.x, p.y)?;
        loss -= lq;
        excess += model.ln_likelihood(p.y, p.x, &env.test_param)? - lq;
    }
    Ok((loss / pts.len() as f64, excess / pts.len() as f64))
}

fn env_path(label: &str, replicate: u64, idx: u64) -> Vec<u64> {
    vec![label_id(label), replicate, idx]
}

/// Empirical meta-risk of LS-BML over `n_reps` environments with `n_test`
/// test points each. With `N = 0` the predictive uses the marginal prior and
/// the excess is the empirical MER.
///
/// Environment `i` of replicate `r` is the same for every `N`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_meta_risk(
    model: &dyn HierarchicalModel,
    config: &LsBmlConfig,
    n: usize,
    m: usize,
    n_test: usize,
    n_reps: usize,
    seed: u64,
    replicate: u64,
) -> Result<EmpiricalRisk> {
    config.validate()?;
    if n_test == 0 || n_reps == 0 {
        return Err(Error::Argument("n_test and n_reps must be positive".into()));
    }
    let per_env = (0..n_reps as u64)
        .into_par_iter()
        .map(|i| {
            let path = env_path("lsbml", replicate, i);
            let env = sample_environment_with(model, n, m, seed, &path)?;
            let pred = if n == 0 {
                predictive_particles(model, None, &env.test_train, config, seed, &path)?
            } else {
                let chain = run_lsbml_at(model, &env.meta_data, config, seed, &path)?;
                predictive_particles(model, Some(chain.kept_samples()), &env.test_train, config, seed, &path)?
            };
            score(model, &env, |x, y| pred.ln_density(model, x, y), n_test, seed, &path)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(per_env, model.genie_risk()?, n, m, Method::Lsbml))
}

/// The same estimator with the exact Bayesian predictive (quadrature
/// hyperposterior, conjugate per-task posteriors) in place of the sampler,
/// on the same environments and test points.
pub fn empirical_meta_risk_perfect(
    exact: &SinusoidExact<'_>,
    n: usize,
    m: usize,
    n_test: usize,
    n_reps: usize,
    seed: u64,
    replicate: u64,
) -> Result<EmpiricalRisk> {
    let model: &SinusoidModel = exact.model();
    if n_test == 0 || n_reps == 0 {
        return Err(Error::Argument("n_test and n_reps must be positive".into()));
    }
    let per_env = (0..n_reps as u64)
        .into_par_iter()
        .map(|i| {
            let path = env_path("lsbml", replicate, i);
            let env = sample_environment_with(model, n, m, seed, &path)?;
            let mut omega_data = env.meta_data.clone();
            omega_data.push(env.test_train.clone());
            let omega = exact.hyperposterior(&omega_data);
            let stats = GaussStats::from_data(&env.test_train);
            let ln_q = |x: f64, y: f64| -> Result<f64> {
                let terms: Vec<f64> = exact
                    .predictive_mixture(&omega, &stats, x)
                    .iter()
                    .map(|&(o, mu, v)| {
                        o.ln() - 0.5 * (2.0 * std::f64::consts::PI * v).ln() - (y - mu).powi(2) / (2.0 * v)
                    })
                    .collect();
                Ok(log_sum_exp(&terms))
            };
            score(model, &env, ln_q, n_test, seed, &path)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(per_env, exact.genie_risk(), n, m, Method::QuadratureMc))
}
