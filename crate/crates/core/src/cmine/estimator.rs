use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::{mlp_train, LabeledSet, MlpClassifier, TrainConfig};
use crate::bounds::{memr_ub_split, mer_ub, BoundInput, BoundReport, Provenance};
use crate::error::{ensure_finite, Error, Result};
use crate::exact::Quantity;
use crate::model::{sample_environment_with, HierarchicalModel};
use crate::rng::{label_id, stream, Purpose};

/// Which mutual information the classifier estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiTarget {
    /// `I(U; Z_{1:N})`
    HyperMeta,
    /// `I(W; Z | U)`
    ParamGivenHyper,
    /// `I(W; Z)` under the marginal prior
    ParamData,
}

impl MiTarget {
    pub fn as_str(&self) -> &'static str {
        match self {
            MiTarget::HyperMeta => "hyper_meta",
            MiTarget::ParamGivenHyper => "param_given_hyper",
            MiTarget::ParamData => "param_data",
        }
    }

    pub fn quantity(&self) -> Quantity {
        match self {
            MiTarget::HyperMeta => Quantity::MiHyperMeta,
            MiTarget::ParamGivenHyper => Quantity::MiParamGivenHyper,
            MiTarget::ParamData => Quantity::MiParamData,
        }
    }
}

/// How the rows are shared between training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitProtocol {
    /// Train and evaluate on the same rows.
    Same,
    /// Train on one half of the pairs, evaluate on the other.
    Split,
}

impl SplitProtocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitProtocol::Same => "same",
            SplitProtocol::Split => "split",
        }
    }
}

/// Estimator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CmineConfig {
    pub train: TrainConfig<f64>,
    pub hidden: Vec<usize>,
    /// Total rows, half joint and half product.
    pub n_samples: usize,
    pub splits: usize,
    pub protocol: SplitProtocol,
    /// Classifier outputs are clipped to `[clip, 1 - clip]`.
    pub clip: f64,
    /// Largest admissible feature width.
    pub max_width: usize,
}

impl Default for CmineConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            hidden: vec![64, 64],
            n_samples: 20_000,
            splits: 1,
            protocol: SplitProtocol::Same,
            clip: 1e-4,
            max_width: 4096,
        }
    }
}

impl CmineConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.n_samples < 4 || !self.n_samples.is_multiple_of(2) {
            return Err(Error::Argument(format!(
                "n_samples = {} must be even and at least 4",
                self.n_samples
            )));
        }
        if self.splits == 0 || self.hidden.contains(&0) || self.max_width == 0 {
            return Err(Error::Argument("splits, hidden widths and max_width must be positive".into()));
        }
        if !(self.clip > 0.0 && self.clip < 0.5) {
            return Err(Error::Argument(format!("clip = {} must lie in (0, 0.5)", self.clip)));
        }
        Ok(())
    }
}

/// Joint rows and their product counterparts; row `i` of each shares every
/// block except the resampled one.
#[derive(Debug, Clone, PartialEq)]
pub struct MiDataset {
    pub joint: Vec<Vec<f64>>,
    pub product: Vec<Vec<f64>>,
}

impl MiDataset {
    pub fn width(&self) -> usize {
        self.joint.first().map(Vec::len).unwrap_or(0)
    }

    pub fn pairs(&self) -> usize {
        self.joint.len()
    }

    pub fn labeled(&self) -> LabeledSet<f64> {
        self.labeled_subset(&(0..self.pairs()).collect::<Vec<_>>())
    }

    fn labeled_subset(&self, idx: &[usize]) -> LabeledSet<f64> {
        let mut features = Vec::with_capacity(2 * idx.len());
        let mut labels = Vec::with_capacity(2 * idx.len());
        for &i in idx {
            features.push(self.joint[i].clone());
            labels.push(1);
            features.push(self.product[i].clone());
            labels.push(0);
        }
        LabeledSet { features, labels }
    }
}

/// Feature width of a target's rows.
pub fn feature_width(model: &dyn HierarchicalModel, target: MiTarget, n_tasks: usize, m: usize) -> usize {
    let hyper = model.hyper_features(&model.sample_hyper(&mut stream(0, &[]))).len();
    let param = model.param_features(&vec![0.0; model.param_dim()]).len();
    let pair = 2;
    match target {
        MiTarget::HyperMeta => hyper + pair * n_tasks * m,
        MiTarget::ParamGivenHyper => param + pair * m + hyper,
        MiTarget::ParamData => param + pair * m,
    }
}

fn flatten(model: &dyn HierarchicalModel, row: &mut Vec<f64>, data: &[crate::model::Sample]) {
    for s in data {
        row.extend(model.sample_features(s));
    }
}

/// Builds `n_samples` rows (half joint, half product).
///
/// Row layouts, in order:
/// * `HyperMeta`: `[u, Z_1, ..., Z_N]`, product with `u' ~ P_U`;
/// * `ParamGivenHyper`: `[w, Z, u]`, product with `w' ~ P_{W|U=u}`;
/// * `ParamData`: `[w, Z]`, product with `w' ~ P_W`.
///
/// Each `Z` is flattened pair by pair through the model's feature map. Row
/// `i` comes from its own stream and the parameter-level rows do not depend
/// on `n_tasks`, so estimates at different `N` share their randomness.
pub fn build_mi_dataset(
    model: &dyn HierarchicalModel,
    target: MiTarget,
    n_tasks: usize,
    m: usize,
    n_samples: usize,
    max_width: usize,
    seed: u64,
) -> Result<MiDataset> {
    if n_samples < 2 || !n_samples.is_multiple_of(2) {
        return Err(Error::Argument(format!("n_samples = {n_samples} must be even and positive")));
    }
    if m == 0 || (target == MiTarget::HyperMeta && n_tasks == 0) {
        return Err(Error::Argument("the target needs m ≥ 1 (and N ≥ 1 for the hyper level)".into()));
    }
    let width = feature_width(model, target, n_tasks, m);
    if width > max_width {
        return Err(Error::Capacity {
            what: "C-MINE feature width",
            required: width as u128,
            allowed: max_width as u128,
        });
    }
    let tasks = if target == MiTarget::HyperMeta { n_tasks } else { 0 };
    let root = [label_id("cmine"), label_id(target.as_str())];
    let mut joint = Vec::with_capacity(n_samples / 2);
    let mut product = Vec::with_capacity(n_samples / 2);
    for i in 0..n_samples / 2 {
        let path = [root[0], root[1], Purpose::MiDataset as u64, i as u64];
        let env = sample_environment_with(model, tasks, m, seed, &path)?;
        let mut fresh = stream(seed, &[root[0], root[1], Purpose::MiDataset as u64, i as u64, 1]);
        let (mut a, mut b) = (Vec::with_capacity(width), Vec::with_capacity(width));
        match target {
            MiTarget::HyperMeta => {
                a.extend(model.hyper_features(&env.u));
                b.extend(model.hyper_features(&model.sample_hyper(&mut fresh)));
                for data in &env.meta_data {
                    flatten(model, &mut a, data);
                    flatten(model, &mut b, data);
                }
            }
            MiTarget::ParamGivenHyper | MiTarget::ParamData => {
                let w_prime = if target == MiTarget::ParamGivenHyper {
                    model.sample_param(&env.u, &mut fresh)
                } else {
                    let u = model.sample_hyper(&mut fresh);
                    model.sample_param(&u, &mut fresh)
                };
                a.extend(model.param_features(&env.test_param));
                b.extend(model.param_features(&w_prime));
                flatten(model, &mut a, &env.test_train);
                flatten(model, &mut b, &env.test_train);
                if target == MiTarget::ParamGivenHyper {
                    let u = model.hyper_features(&env.u);
                    a.extend_from_slice(&u);
                    b.extend(u);
                }
            }
        }
        debug_assert_eq!(a.len(), width);
        joint.push(a);
        product.push(b);
    }
    Ok(MiDataset { joint, product })
}

/// `(X, Y)` standard bivariate Normal with correlation `rho`; product rows
/// redraw `X` independently. True MI is `-½ ln(1 - ρ²)`.
pub fn gaussian_pair_dataset(rho: f64, n_samples: usize, seed: u64) -> Result<MiDataset> {
    if !(rho.abs() < 1.0) || n_samples < 2 || !n_samples.is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "need |rho| < 1 and an even sample count, got rho = {rho}, n = {n_samples}"
        )));
    }
    let mut rng = stream(seed, &[label_id("calibration"), Purpose::Calibration as u64]);
    let s = (1.0 - rho * rho).sqrt();
    let mut joint = Vec::with_capacity(n_samples / 2);
    let mut product = Vec::with_capacity(n_samples / 2);
    for _ in 0..n_samples / 2 {
        let x: f64 = StandardNormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        let x2: f64 = StandardNormal.sample(&mut rng);
        let y = rho * x + s * e;
        joint.push(vec![x, y]);
        product.push(vec![x2, y]);
    }
    Ok(MiDataset { joint, product })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Accuracy of the last trained classifier on its training rows.
    pub train_accuracy: f64,
    /// Fraction of evaluated outputs that hit a clip boundary.
    pub ratio_clip_fraction: f64,
}

/// Donsker–Varadhan estimate from classifier density ratios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiEstimate {
    pub value: f64,
    /// Delta-method standard error over the evaluation pairs, pooled over
    /// splits.
    pub std_error: f64,
    pub n_samples: usize,
    pub splits: usize,
    pub protocol: SplitProtocol,
    pub diagnostics: Diagnostics,
    /// Raw value below zero; the value itself is not floored.
    pub negative: bool,
}

/// Name of the MI functional, recorded with every estimate.
pub const FUNCTIONAL: &str = "donsker_varadhan";

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let width = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        // constant columns are only centered
        let scale = var.iter().map(|&v| if v > 1e-24 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

fn clipped_ln_ratio(net: &MlpClassifier<f64>, x: &[f64], clip: f64) -> (f64, bool) {
    let g = net.predict(x);
    let c = g.clamp(clip, 1.0 - clip);
    ((c / (1.0 - c)).ln(), c != g || g <= clip || g >= 1.0 - clip)
}

/// Trains on `data` per the protocol and evaluates the DV functional.
pub fn estimate_mi_from(data: &MiDataset, config: &CmineConfig, seed: u64, path: &[u64]) -> Result<MiEstimate> {
    config.validate()?;
    let pairs = data.pairs();
    if pairs < 2 || data.product.len() != pairs {
        return Err(Error::Argument("dataset needs at least two joint/product pairs".into()));
    }
    let mut values = Vec::with_capacity(config.splits);
    let mut influence = Vec::new();
    let mut clipped = 0usize;
    let mut evaluated = 0usize;
    let mut train_accuracy = 0.0;
    for split in 0..config.splits {
        let sub = |purpose: Purpose| {
            let mut p = path.to_vec();
            p.extend_from_slice(&[purpose as u64, split as u64]);
            stream(seed, &p)
        };
        let mut order: Vec<usize> = (0..pairs).collect();
        let (train_idx, eval_idx) = match config.protocol {
            SplitProtocol::Same => (order.clone(), order),
            SplitProtocol::Split => {
                order.shuffle(&mut sub(Purpose::MiDataset));
                let (a, b) = order.split_at(pairs / 2);
                (a.to_vec(), b.to_vec())
            }
        };
        let train_rows = data.labeled_subset(&train_idx);
        let scaler = Standardizer::fit(&train_rows.features);
        let train = LabeledSet {
            features: train_rows.features.iter().map(|r| scaler.apply(r)).collect(),
            labels: train_rows.labels,
        };
        let (net, _) = mlp_train(&train, &config.hidden, &config.train, &mut sub(Purpose::MiTraining))?;
        train_accuracy = train
            .features
            .iter()
            .zip(&train.labels)
            .filter(|(x, &l)| (net.predict(x) > 0.5) == (l == 1))
            .count() as f64
            / train.len() as f64;

        let mut ln_joint = Vec::with_capacity(eval_idx.len());
        let mut ratio_product = Vec::with_capacity(eval_idx.len());
        for &i in &eval_idx {
            let (lj, cj) = clipped_ln_ratio(&net, &scaler.apply(&data.joint[i]), config.clip);
            let (lp, cp) = clipped_ln_ratio(&net, &scaler.apply(&data.product[i]), config.clip);
            clipped += cj as usize + cp as usize;
            ln_joint.push(lj);
            ratio_product.push(lp.exp());
        }
        evaluated += 2 * eval_idx.len();
        let n = eval_idx.len() as f64;
        let mean_ln = ln_joint.iter().sum::<f64>() / n;
        let mean_ratio = ratio_product.iter().sum::<f64>() / n;
        values.push(mean_ln - mean_ratio.ln());
        // Pairs share blocks, so the linearization is taken per pair.
        influence.extend(
            ln_joint
                .iter()
                .zip(&ratio_product)
                .map(|(lj, rp)| lj - mean_ln - (rp / mean_ratio - 1.0)),
        );
    }
    let clip_fraction = clipped as f64 / evaluated as f64;
    if clip_fraction >= 1.0 {
        return Err(Error::EstimationFailure(
            "every classifier output sits at a clip boundary".into(),
        ));
    }
    let value = ensure_finite(|| "MI estimate".into(), values.iter().sum::<f64>() / values.len() as f64)?;
    let k = influence.len() as f64;
    let var = influence.iter().map(|d| d * d).sum::<f64>() / (k - 1.0).max(1.0);
    let std_error = (var / k).sqrt();
    Ok(MiEstimate {
        value,
        std_error,
        n_samples: 2 * pairs,
        splits: config.splits,
        protocol: config.protocol,
        diagnostics: Diagnostics {
            train_accuracy,
            ratio_clip_fraction: clip_fraction,
        },
        negative: value < 0.0,
    })
}

/// Builds the target's dataset and estimates its MI. A separate classifier
/// is trained per `(target, N, m)`.
pub fn estimate_mi(
    model: &dyn HierarchicalModel,
    target: MiTarget,
    n_tasks: usize,
    m: usize,
    config: &CmineConfig,
    seed: u64,
) -> Result<MiEstimate> {
    config.validate()?;
    let data = build_mi_dataset(model, target, n_tasks, m, config.n_samples, config.max_width, seed)?;
    let path = [
        label_id("cmine"),
        label_id(target.as_str()),
        n_tasks as u64,
        m as u64,
    ];
    estimate_mi_from(&data, config, seed, &path)
}

/// Estimated terms and the split MEMR bound they give.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundTerms {
    pub hyper_meta: MiEstimate,
    pub param_given_hyper: MiEstimate,
    pub bound: BoundReport<f64>,
}

fn input(target: MiTarget, est: &MiEstimate) -> BoundInput<f64> {
    BoundInput {
        quantity: target.quantity(),
        // the bounds take non-negative MI
        value: est.value.max(0.0),
        provenance: Provenance::Cmine,
    }
}

/// `I(U; Z_{1:N})/(Nm) + I(W; Z | U)/m` with both terms estimated.
pub fn estimate_bound_terms(
    model: &dyn HierarchicalModel,
    n_tasks: usize,
    m: usize,
    config: &CmineConfig,
    seed: u64,
) -> Result<BoundTerms> {
    let hyper_meta = estimate_mi(model, MiTarget::HyperMeta, n_tasks, m, config, seed)?;
    let param_given_hyper = estimate_param_given_hyper(model, m, config, seed)?;
    let bound = bound_from_estimates(&hyper_meta, &param_given_hyper, n_tasks, m)?;
    Ok(BoundTerms {
        hyper_meta,
        param_given_hyper,
        bound,
    })
}

/// `I(W; Z | U)`; independent of `N`, so it can be shared across a sweep.
pub fn estimate_param_given_hyper(
    model: &dyn HierarchicalModel,
    m: usize,
    config: &CmineConfig,
    seed: u64,
) -> Result<MiEstimate> {
    estimate_mi(model, MiTarget::ParamGivenHyper, 0, m, config, seed)
}

/// `I(W; Z)/m` with the MI estimated.
pub fn estimate_mer_bound(
    model: &dyn HierarchicalModel,
    m: usize,
    config: &CmineConfig,
    seed: u64,
) -> Result<(MiEstimate, BoundReport<f64>)> {
    let est = estimate_mi(model, MiTarget::ParamData, 0, m, config, seed)?;
    let bound = mer_ub(input(MiTarget::ParamData, &est), m)?;
    Ok((est, bound))
}

/// Combines a split bound from precomputed estimates.
pub fn bound_from_estimates(
    hyper_meta: &MiEstimate,
    param_given_hyper: &MiEstimate,
    n_tasks: usize,
    m: usize,
) -> Result<BoundReport<f64>> {
    memr_ub_split(
        input(MiTarget::HyperMeta, hyper_meta),
        input(MiTarget::ParamGivenHyper, param_given_hyper),
        n_tasks,
        m,
    )
}
