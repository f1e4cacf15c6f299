//! Hierarchical Bayesian models: a hyperprior `P_U`, a conditional prior
//! `P_{W|U}` and a discriminative likelihood `P_{Y|X,W}`.

mod environment;
mod logistic;
mod sinusoid;

pub use environment::{sample_environment, sample_environment_with, EnvironmentDraw};
pub use logistic::{DiscreteLogisticModel, Outcome, DEFAULT_ENUMERATION_BUDGET};
pub use sinusoid::{GaussStats, HyperGrid, SinusoidModel};

use rand::RngCore;

use crate::error::{Error, Result};

/// One observed pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x: f64,
    pub y: f64,
}

pub type Dataset = Vec<Sample>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub enumerable: bool,
    pub conjugate_given_hyper: bool,
}

/// Support of the hyperparameter, used to pick the space the Langevin chain
/// runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperSupport {
    Real,
    /// Strictly positive components; sampled in `ln u`.
    Positive,
    Discrete,
}

/// Evaluation of every log density and gradient at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEval {
    pub ln_hyperprior: f64,
    pub ln_prior: f64,
    pub ln_likelihood: f64,
    pub grad_w_ln_likelihood: Vec<f64>,
    pub grad_w_ln_prior: Vec<f64>,
    pub grad_u_ln_prior: Vec<f64>,
    pub grad_u_ln_hyperprior: Vec<f64>,
}

/// A point `(u, w, x, y)` at which densities are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPoint {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub x: f64,
    pub y: f64,
}

pub trait HierarchicalModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn hyper_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn capabilities(&self) -> Capabilities;
    fn hyper_support(&self) -> HyperSupport;

    fn sample_hyper(&self, rng: &mut dyn RngCore) -> Vec<f64>;
    fn sample_param(&self, u: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
    fn sample_input(&self, rng: &mut dyn RngCore) -> f64;
    fn sample_label(&self, x: f64, w: &[f64], rng: &mut dyn RngCore) -> f64;

    /// `m` pairs, conditionally i.i.d. given `w`.
    fn sample_dataset(&self, w: &[f64], m: usize, rng: &mut dyn RngCore) -> Dataset {
        (0..m)
            .map(|_| {
                let x = self.sample_input(rng);
                let y = self.sample_label(x, w, rng);
                Sample { x, y }
            })
            .collect()
    }

    fn ln_hyperprior(&self, u: &[f64]) -> Result<f64>;
    fn ln_prior(&self, w: &[f64], u: &[f64]) -> Result<f64>;
    fn ln_likelihood(&self, y: f64, x: f64, w: &[f64]) -> Result<f64>;

    fn ln_dataset_likelihood(&self, data: &[Sample], w: &[f64]) -> Result<f64> {
        data.iter()
            .try_fold(0.0, |acc, s| Ok(acc + self.ln_likelihood(s.y, s.x, w)?))
    }

    fn grad_w_ln_likelihood(&self, y: f64, x: f64, w: &[f64]) -> Result<Vec<f64>>;
    fn grad_w_ln_prior(&self, w: &[f64], u: &[f64]) -> Result<Vec<f64>>;
    fn grad_u_ln_prior(&self, w: &[f64], u: &[f64]) -> Result<Vec<f64>>;
    fn grad_u_ln_hyperprior(&self, u: &[f64]) -> Result<Vec<f64>>;

    /// Genie-aided log-loss `H(Y | X, W)`, when available in closed form.
    fn genie_risk(&self) -> Result<f64> {
        Err(Error::Capability(format!("genie risk for {}", self.name())))
    }

    /// Gradient of the marginal prior `P_W = E_{P_U}[P_{W|U}]`.
    fn grad_w_ln_marginal_prior(&self, _w: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Capability(format!(
            "marginal prior gradient for {}",
            self.name()
        )))
    }

    /// Feature encodings used by the neural MI estimator.
    fn hyper_features(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }
    fn param_features(&self, w: &[f64]) -> Vec<f64> {
        w.to_vec()
    }
    fn sample_features(&self, s: &Sample) -> Vec<f64> {
        vec![s.x, s.y]
    }

    fn log_densities_and_grads(&self, p: &ModelPoint) -> Result<DensityEval> {
        Ok(DensityEval {
            ln_hyperprior: self.ln_hyperprior(&p.u)?,
            ln_prior: self.ln_prior(&p.w, &p.u)?,
            ln_likelihood: self.ln_likelihood(p.y, p.x, &p.w)?,
            grad_w_ln_likelihood: self.grad_w_ln_likelihood(p.y, p.x, &p.w)?,
            grad_w_ln_prior: self.grad_w_ln_prior(&p.w, &p.u)?,
            grad_u_ln_prior: self.grad_u_ln_prior(&p.w, &p.u)?,
            grad_u_ln_hyperprior: self.grad_u_ln_hyperprior(&p.u)?,
        })
    }
}

pub(crate) fn check_dim(field: &'static str, v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::Argument(format!(
            "`{field}` has dimension {}, expected {dim}",
            v.len()
        )));
    }
    if let Some(bad) = v.iter().find(|c| !c.is_finite()) {
        return Err(Error::Domain { field, value: *bad });
    }
    Ok(())
}
