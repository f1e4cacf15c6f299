use std::io::Write;

use rand::seq::index;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::svgd::{svgd_step, ParticleEnsemble};
use super::LsBmlConfig;
use crate::error::{Error, Result};
use crate::model::{Dataset, HierarchicalModel, HyperSupport};
use crate::rng::{stream, Purpose};

/// Unconstrained coordinates the Langevin dynamics run in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperTransform {
    Identity,
    /// `θ = ln u` for a positive hyperparameter.
    Log,
}

impl HyperTransform {
    pub fn for_model(model: &dyn HierarchicalModel) -> Result<Self> {
        match model.hyper_support() {
            HyperSupport::Real => Ok(HyperTransform::Identity),
            HyperSupport::Positive => Ok(HyperTransform::Log),
            HyperSupport::Discrete => Err(Error::Capability(format!(
                "Langevin dynamics need a continuous hyperparameter; {} has a discrete one",
                model.name()
            ))),
        }
    }

    pub fn to_theta(&self, u: &[f64]) -> Vec<f64> {
        match self {
            HyperTransform::Identity => u.to_vec(),
            HyperTransform::Log => u.iter().map(|v| v.ln()).collect(),
        }
    }

    pub fn to_u(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            HyperTransform::Identity => theta.to_vec(),
            HyperTransform::Log => theta.iter().map(|v| v.exp()).collect(),
        }
    }

    /// Gradient in `θ` of the log density expressed in `θ` (Jacobian included).
    pub fn grad_theta(&self, u: &[f64], grad_u: &[f64]) -> Vec<f64> {
        match self {
            HyperTransform::Identity => grad_u.to_vec(),
            HyperTransform::Log => u.iter().zip(grad_u).map(|(u, g)| u * g + 1.0).collect(),
        }
    }
}

/// The hyperparameter trajectory of one SGLD run.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperChain {
    /// `u_t` after each step.
    pub samples: Vec<Vec<f64>>,
    /// `η_t` used for each step.
    pub step_sizes: Vec<f64>,
    pub burn_in: usize,
    pub kept: usize,
}

impl HyperChain {
    /// The last `kept` samples.
    pub fn kept_samples(&self) -> &[Vec<f64>] {
        &self.samples[self.samples.len() - self.kept..]
    }

    /// Samples after burn-in.
    pub fn post_burn_in(&self) -> &[Vec<f64>] {
        &self.samples[self.burn_in..]
    }
}

/// One SGLD update of the hyperparameter:
/// `θ' = θ + (η/2) ∇_θ [ (N/Ñ)(1/K) Σ_i Σ_k ln P(Z_i, w_i^k | u) + ln P_U(u) ] + √η ξ`.
///
/// `ensembles` holds the current particles of the `Ñ` batch tasks; `n_tasks`
/// is `N`. The likelihood does not depend on `u`, so only the conditional
/// prior contributes through the particles.
pub fn sgld_hyper_step(
    model: &dyn HierarchicalModel,
    u: &[f64],
    ensembles: &[ParticleEnsemble<f64>],
    n_tasks: usize,
    eta: f64,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    if !(eta >= 0.0) {
        return Err(Error::Argument(format!("SGLD step size must be non-negative, got {eta}")));
    }
    let transform = HyperTransform::for_model(model)?;
    let mut grad_u = model.grad_u_ln_hyperprior(u)?;
    if !ensembles.is_empty() {
        let scale = n_tasks as f64 / ensembles.len() as f64;
        for e in ensembles {
            let per = scale / e.len() as f64;
            for w in &e.particles {
                for (a, b) in grad_u.iter_mut().zip(model.grad_u_ln_prior(w, u)?) {
                    *a += per * b;
                }
            }
        }
    }
    let noise: Vec<f64> = (0..u.len()).map(|_| StandardNormal.sample(rng)).collect();
    if eta == 0.0 {
        return Ok(u.to_vec());
    }
    let g = transform.grad_theta(u, &grad_u);
    let theta: Vec<f64> = transform
        .to_theta(u)
        .iter()
        .zip(&g)
        .zip(&noise)
        .map(|((t, g), n)| t + 0.5 * eta * g + eta.sqrt() * n)
        .collect();
    Ok(transform.to_u(&theta))
}

fn sub_path(path: &[u64], purpose: Purpose, rest: &[u64]) -> Vec<u64> {
    let mut p = path.to_vec();
    p.push(purpose as u64);
    p.extend_from_slice(rest);
    p
}

/// Draws `K` particles from `P_{W|U=u}` and runs the configured SVGD steps.
pub(crate) fn fit_task(
    model: &dyn HierarchicalModel,
    data: &[crate::model::Sample],
    u: &[f64],
    task_id: usize,
    config: &LsBmlConfig,
    rng: &mut dyn RngCore,
) -> Result<ParticleEnsemble<f64>> {
    let init: Vec<Vec<f64>> = (0..config.particles).map(|_| model.sample_param(u, rng)).collect();
    let mut e = ParticleEnsemble::new(init, task_id)?;
    for _ in 0..config.svgd_steps {
        e = svgd_step(&e, data, u, model, config.svgd_step_size)?;
    }
    Ok(e)
}

/// The outer loop shared by meta-training and prior-only chains: with no
/// tasks the chain targets the hyperprior.
pub fn run_hyper_chain(
    model: &dyn HierarchicalModel,
    meta_data: &[Dataset],
    config: &LsBmlConfig,
    seed: u64,
    path: &[u64],
) -> Result<HyperChain> {
    config.validate()?;
    HyperTransform::for_model(model)?;
    let n = meta_data.len();
    let batch = config.task_batch.min(n);
    let steps = config.sgld_steps;
    let mut u = model.sample_hyper(&mut stream(seed, &sub_path(path, Purpose::Sgld, &[0])));
    let mut samples = Vec::with_capacity(steps);
    let mut step_sizes = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut rng = stream(seed, &sub_path(path, Purpose::Sgld, &[t as u64 + 1]));
        let chosen = if batch == 0 {
            Vec::new()
        } else {
            index::sample(&mut rng, n, batch).into_vec()
        };
        let ensembles = chosen
            .iter()
            .map(|&i| {
                let mut r = stream(seed, &sub_path(path, Purpose::Svgd, &[t as u64, i as u64]));
                fit_task(model, &meta_data[i], &u, i, config, &mut r)
            })
            .collect::<Result<Vec<_>>>()?;
        let eta = config.sgld_schedule.eta(t, steps);
        u = sgld_hyper_step(model, &u, &ensembles, n, eta, &mut rng)?;
        let magnitude = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let bad = !u.iter().all(|v| v.is_finite()) || magnitude > config.divergence_ceiling;
        samples.push(u.clone());
        step_sizes.push(eta);
        if bad {
            let tail = samples.iter().rev().take(8).rev().map(|s| s[0]).collect();
            return Err(Error::Divergence {
                step: t,
                magnitude,
                tail,
            });
        }
    }
    Ok(HyperChain {
        samples,
        step_sizes,
        burn_in: config.burn_in(),
        kept: config.kept(),
    })
}

/// LS-BML meta-training on `Z_{1:N}`.
pub fn run_lsbml(
    model: &dyn HierarchicalModel,
    meta_data: &[Dataset],
    config: &LsBmlConfig,
    seed: u64,
) -> Result<HyperChain> {
    run_lsbml_at(model, meta_data, config, seed, &[])
}

pub(crate) fn run_lsbml_at(
    model: &dyn HierarchicalModel,
    meta_data: &[Dataset],
    config: &LsBmlConfig,
    seed: u64,
    path: &[u64],
) -> Result<HyperChain> {
    if meta_data.is_empty() {
        return Err(Error::Argument("LS-BML meta-training needs at least one task".into()));
    }
    run_hyper_chain(model, meta_data, config, seed, path)
}

/// Writes `t,u_0,..,eta` rows.
pub fn write_chain_trace(chain: &HyperChain, mut out: impl Write) -> Result<()> {
    let dim = chain.samples.first().map(Vec::len).unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((0..dim).map(|j| format!("u_{j}")));
    header.push("eta".into());
    writeln!(out, "{}", header.join(","))?;
    for (t, (u, eta)) in chain.samples.iter().zip(&chain.step_sizes).enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(u.iter().map(|v| format!("{v:e}")));
        row.push(format!("{eta:e}"));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
