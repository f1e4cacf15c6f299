//! Exact values of risks, MER, MEMR and mutual-information terms under the
//! log-loss.
//!
//! The discrete logistic family is handled by exact enumeration; the
//! sinusoid family by hyperparameter quadrature inside an outer Monte Carlo
//! over environment draws.

mod logistic;
mod sinusoid;

pub use logistic::{LogisticEntropies, LogisticExact};
pub use sinusoid::{SinSqLaw, SinusoidExact, SinusoidExactReport};

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::model::DEFAULT_ENUMERATION_BUDGET;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    BayesRisk,
    GenieRisk,
    Mer,
    Memr,
    MetaGain,
    /// `I(U; Z_{1:N})`
    MiHyperMeta,
    /// `I(W; Z | U)`
    MiParamGivenHyper,
    /// `I(W; Z | Z_{1:N})`
    MiParamGivenMetadata,
    /// `I(W; Z)` under the marginal prior
    MiParamData,
}

impl Quantity {
    pub const ALL: [Quantity; 9] = [
        Quantity::BayesRisk,
        Quantity::GenieRisk,
        Quantity::Mer,
        Quantity::Memr,
        Quantity::MetaGain,
        Quantity::MiHyperMeta,
        Quantity::MiParamGivenHyper,
        Quantity::MiParamGivenMetadata,
        Quantity::MiParamData,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Quantity::BayesRisk => "bayes_risk",
            Quantity::GenieRisk => "genie_risk",
            Quantity::Mer => "mer",
            Quantity::Memr => "memr",
            Quantity::MetaGain => "meta_gain",
            Quantity::MiHyperMeta => "mi_hyper_meta",
            Quantity::MiParamGivenHyper => "mi_param_given_hyper",
            Quantity::MiParamGivenMetadata => "mi_param_given_metadata",
            Quantity::MiParamData => "mi_param_data",
        }
    }

    /// Quantities that are excess risks or mutual informations and therefore
    /// non-negative.
    pub fn is_nonnegative(&self) -> bool {
        !matches!(self, Quantity::BayesRisk | Quantity::GenieRisk)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Enumeration,
    QuadratureMc,
    /// Empirical log-loss of the LS-BML predictive.
    Lsbml,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Enumeration => "enumeration",
            Method::QuadratureMc => "quadrature_mc",
            Method::Lsbml => "lsbml",
        }
    }
}

/// A named scalar (nats) with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskReport {
    pub quantity: Quantity,
    pub value: f64,
    /// Zero for exact enumeration.
    pub std_error: f64,
    pub n_tasks: usize,
    pub m: usize,
    pub method: Method,
}

impl RiskReport {
    /// `3 σ + 1e-9`, the slack used by non-negativity and ordering checks.
    pub fn tolerance(&self) -> f64 {
        3.0 * self.std_error + 1e-9
    }
}

/// Budgets for the exact computations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExactOptions {
    /// Cap on enumerated terms (outcome sequences or sufficient-statistic
    /// classes, whichever route is used).
    pub enumeration_budget: u64,
    pub mc_draws: usize,
    pub hyper_nodes: usize,
    pub y_nodes: usize,
    /// Half-width of the `y` grid in units of the noise standard deviation.
    pub y_halfwidth: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            enumeration_budget: DEFAULT_ENUMERATION_BUDGET as u64,
            mc_draws: 4000,
            hyper_nodes: 512,
            y_nodes: 2001,
            y_halfwidth: 8.0,
        }
    }
}

impl ExactOptions {
    pub fn validate(&self) -> Result<()> {
        if self.mc_draws == 0 || self.hyper_nodes < 2 || self.y_nodes < 3 || self.enumeration_budget == 0 {
            return Err(Error::Argument("exact budgets must be positive".into()));
        }
        if !(self.y_halfwidth > 0.0) {
            return Err(Error::Argument("y_halfwidth must be positive".into()));
        }
        Ok(())
    }
}
