//! Classifier-based mutual-information estimation.
//!
//! A feed-forward classifier is trained to tell joint rows from product
//! rows; its odds estimate the density ratio, and the Donsker–Varadhan
//! functional turns the ratios into an MI estimate. Product rows are drawn by
//! resampling one block from its known (conditional) prior.

mod estimator;
mod mlp;

pub use estimator::{
    bound_from_estimates, build_mi_dataset, estimate_bound_terms, estimate_mer_bound, estimate_mi,
    estimate_mi_from, estimate_param_given_hyper, feature_width, gaussian_pair_dataset, BoundTerms,
    CmineConfig, Diagnostics, MiDataset, MiEstimate, MiTarget, SplitProtocol, FUNCTIONAL,
};
pub use mlp::{mlp_train, write_training_curve, Adam, CurvePoint, Gradients, LabeledSet, MlpClassifier, TrainConfig};
