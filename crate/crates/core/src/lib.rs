//! Epistemic uncertainty in Bayesian meta-learning.
//!
//! * [`model`]: hierarchical models (discrete logistic, sinusoid regression).
//! * [`exact`]: exact and quadrature/Monte Carlo risks, MER, MEMR and
//!   mutual-information terms under the log-loss.
//! * [`bounds`]: information-theoretic upper bounds and asymptotics.
//! * [`lsbml`]: Langevin-Stein Bayesian meta-learning (SVGD + SGLD).
//! * [`cmine`]: classifier-based conditional MI estimation.
//! * [`experiment`]: config, sweeps, CSV output and the invariant suite.
//!
//! All information quantities are in nats.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cmine;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod lsbml;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default working precision.
pub type Real = f64;

pub type BoundReport = bounds::BoundReport<Real>;
pub type MlpClassifier = cmine::MlpClassifier<Real>;
pub type MlpClassifier32 = cmine::MlpClassifier<f32>;
pub type TrainConfig = cmine::TrainConfig<Real>;
pub type ParticleEnsemble = lsbml::ParticleEnsemble<Real>;
