//! Langevin-Stein Bayesian meta-learning: SVGD particles for each task's
//! posterior, SGLD on the hyperparameter, and the resulting ensemble
//! predictive.

mod predictive;
mod sgld;
mod svgd;

pub use predictive::{
    empirical_meta_risk, empirical_meta_risk_perfect, predictive_density, predictive_particles, EmpiricalRisk,
    Predictive,
};
pub use sgld::{
    run_hyper_chain, run_lsbml, sgld_hyper_step, write_chain_trace, HyperChain, HyperTransform,
};
pub use svgd::{log_joint_grads, svgd_step, svgd_step_with, ParticleEnsemble, TaskPrior};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SGLD step sizes `η_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    /// `η_t = start - (start - end) t / (T - 1)`
    Linear { start: f64, end: f64 },
    Constant { eta: f64 },
}

impl StepSchedule {
    pub fn eta(&self, t: usize, steps: usize) -> f64 {
        match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::Linear { start, end } => {
                if steps <= 1 {
                    start
                } else {
                    start - (start - end) * t as f64 / (steps - 1) as f64
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant { eta } => eta > 0.0 && eta.is_finite(),
            StepSchedule::Linear { start, end } => start > 0.0 && end > 0.0 && start.is_finite() && end.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Argument("SGLD step sizes must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LsBmlConfig {
    /// Particles per task (`K`).
    pub particles: usize,
    pub svgd_steps: usize,
    /// SVGD step size `ε`.
    pub svgd_step_size: f64,
    /// Outer iterations `T`.
    pub sgld_steps: usize,
    pub sgld_schedule: StepSchedule,
    /// Tasks per outer iteration (`Ñ`); capped at the number of tasks.
    pub task_batch: usize,
    /// Hyperparameter samples returned (`S`).
    pub hyper_samples_kept: usize,
    /// Leading fraction of the chain discarded.
    pub burn_in_fraction: f64,
    /// `|u|` above this aborts the chain.
    pub divergence_ceiling: f64,
    /// Environments per replicate when estimating the meta-risk.
    pub eval_environments: usize,
    /// Test points per environment.
    pub eval_test_points: usize,
}

impl Default for LsBmlConfig {
    fn default() -> Self {
        Self {
            particles: 3,
            svgd_steps: 20,
            svgd_step_size: 0.01,
            sgld_steps: 33,
            sgld_schedule: StepSchedule::Linear { start: 0.3, end: 0.201 },
            task_batch: 4,
            hyper_samples_kept: 3,
            burn_in_fraction: 0.5,
            divergence_ceiling: 1e12,
            eval_environments: 500,
            eval_test_points: 4,
        }
    }
}

impl LsBmlConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("particles", self.particles),
            ("svgd_steps", self.svgd_steps),
            ("sgld_steps", self.sgld_steps),
            ("task_batch", self.task_batch),
            ("hyper_samples_kept", self.hyper_samples_kept),
            ("eval_environments", self.eval_environments),
            ("eval_test_points", self.eval_test_points),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Argument(format!("lsbml.{name} must be positive")));
            }
        }
        if !(self.svgd_step_size >= 0.0 && self.svgd_step_size.is_finite()) {
            return Err(Error::Argument("lsbml.svgd_step_size must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::Argument("lsbml.burn_in_fraction must be in [0, 1)".into()));
        }
        if !(self.divergence_ceiling > 0.0) {
            return Err(Error::Argument("lsbml.divergence_ceiling must be positive".into()));
        }
        self.sgld_schedule.validate()
    }

    pub fn burn_in(&self) -> usize {
        (self.burn_in_fraction * self.sgld_steps as f64).floor() as usize
    }

    pub fn kept(&self) -> usize {
        self.hyper_samples_kept.min(self.sgld_steps - self.burn_in())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_endpoints() {
        let c = LsBmlConfig::default();
        assert_eq!(c.sgld_schedule.eta(0, 33), 0.3);
        assert!((c.sgld_schedule.eta(32, 33) - 0.201).abs() < 1e-15);
        assert_eq!(c.burn_in(), 16);
        assert_eq!(c.kept(), 3);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let r: std::result::Result<LsBmlConfig, _> = toml::from_str("particles = 3\nbogus = 1\n");
        assert!(r.is_err());
        let r: LsBmlConfig = toml::from_str("sgld_schedule = { kind = \"constant\", eta = 0.01 }\n").unwrap();
        assert_eq!(r.sgld_schedule, StepSchedule::Constant { eta: 0.01 });
    }
}
