//! Information-theoretic upper bounds on MER / MEMR and the large-sample
//! asymptotics of the sensitivity terms.
//!
//! The closed-form bounds are generic over the scalar type; the asymptotic
//! formulas need the sinusoid quadrature and work in `f64`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{Quantity, SinSqLaw};
use crate::model::{HyperGrid, SinusoidModel};
use crate::numerics::simpson;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    MerUb,
    MemrUbChain,
    MemrUbSplit,
    MemrUbSubgaussian,
    AsymptoticHyper,
    AsymptoticParam,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::MerUb => "mer_ub",
            BoundKind::MemrUbChain => "memr_ub_chain",
            BoundKind::MemrUbSplit => "memr_ub_split",
            BoundKind::MemrUbSubgaussian => "memr_ub_subgaussian",
            BoundKind::AsymptoticHyper => "asymptotic_hyper",
            BoundKind::AsymptoticParam => "asymptotic_param",
        }
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where an MI input came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Cmine,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Exact => "exact",
            Provenance::Cmine => "cmine",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInput<T> {
    pub quantity: Quantity,
    pub value: T,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport<T> {
    pub kind: BoundKind,
    pub value: T,
    pub inputs: Vec<BoundInput<T>>,
    pub n_tasks: usize,
    pub m: usize,
}

impl<T: Scalar> BoundReport<T> {
    /// `"bound:exact"`, `"bound:cmine"` or `"bound:mixed"`.
    pub fn provenance_label(&self) -> String {
        let mut p = self.inputs.iter().map(|i| i.provenance);
        match p.next() {
            None => "bound:formula".into(),
            Some(first) if p.all(|q| q == first) => format!("bound:{}", first.as_str()),
            Some(_) => "bound:mixed".into(),
        }
    }
}

fn check_mi<T: Scalar>(name: &str, v: T) -> Result<()> {
    if !v.is_finite() || v < T::zero() {
        return Err(Error::Argument(format!(
            "{name} must be a finite non-negative MI, got {v}"
        )));
    }
    Ok(())
}

fn check_counts(n: usize, m: usize, need_tasks: bool) -> Result<()> {
    if m == 0 {
        return Err(Error::Argument("m must be at least 1".into()));
    }
    if need_tasks && n == 0 {
        return Err(Error::Argument("the MEMR bound needs N >= 1 meta-training tasks".into()));
    }
    Ok(())
}

fn count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count fits in the scalar type")
}

/// `I(U; Z_{1:N}) / (N m) + I(W; Z | U) / m`
pub fn memr_ub_split<T: Scalar>(
    mi_hyper_meta: BoundInput<T>,
    mi_param_given_hyper: BoundInput<T>,
    n: usize,
    m: usize,
) -> Result<BoundReport<T>> {
    check_counts(n, m, true)?;
    check_mi("I(U; Z_1:N)", mi_hyper_meta.value)?;
    check_mi("I(W; Z | U)", mi_param_given_hyper.value)?;
    let (nn, mm) = (count::<T>(n), count::<T>(m));
    Ok(BoundReport {
        kind: BoundKind::MemrUbSplit,
        value: mi_hyper_meta.value / (nn * mm) + mi_param_given_hyper.value / mm,
        inputs: vec![mi_hyper_meta, mi_param_given_hyper],
        n_tasks: n,
        m,
    })
}

/// `I(W; Z | Z_{1:N}) / m`, the intermediate term of the chain.
pub fn memr_ub_chain<T: Scalar>(mi_param_given_metadata: BoundInput<T>, n: usize, m: usize) -> Result<BoundReport<T>> {
    check_counts(n, m, false)?;
    check_mi("I(W; Z | Z_1:N)", mi_param_given_metadata.value)?;
    Ok(BoundReport {
        kind: BoundKind::MemrUbChain,
        value: mi_param_given_metadata.value / count::<T>(m),
        inputs: vec![mi_param_given_metadata],
        n_tasks: n,
        m,
    })
}

/// `I(W; Z) / m`
pub fn mer_ub<T: Scalar>(mi_param_data: BoundInput<T>, m: usize) -> Result<BoundReport<T>> {
    check_counts(0, m, false)?;
    check_mi("I(W; Z)", mi_param_data.value)?;
    Ok(BoundReport {
        kind: BoundKind::MerUb,
        value: mi_param_data.value / count::<T>(m),
        inputs: vec![mi_param_data],
        n_tasks: 0,
        m,
    })
}

/// `√(2σ² (I(U; Z_{1:N}) / (N m) + I(W; Z | U) / m))` for a σ²-sub-Gaussian loss.
pub fn memr_ub_subgaussian<T: Scalar>(
    sigma: T,
    mi_hyper_meta: BoundInput<T>,
    mi_param_given_hyper: BoundInput<T>,
    n: usize,
    m: usize,
) -> Result<BoundReport<T>> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::Argument(format!("sub-Gaussian sigma must be positive, got {sigma}")));
    }
    let split = memr_ub_split(mi_hyper_meta, mi_param_given_hyper, n, m)?;
    Ok(BoundReport {
        kind: BoundKind::MemrUbSubgaussian,
        value: (T::lit(2.0) * sigma * sigma * split.value).sqrt(),
        ..split
    })
}

/// A Fisher information matrix (row-major) at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo {
    pub dim: usize,
    pub matrix: Vec<f64>,
    pub at_point: Vec<f64>,
}

impl FisherInfo {
    pub fn scalar(value: f64, at: f64) -> Self {
        Self {
            dim: 1,
            matrix: vec![value],
            at_point: vec![at],
        }
    }

    pub fn ln_det(&self) -> f64 {
        match self.dim {
            1 => self.matrix[0].ln(),
            // only scalar models are supported by the asymptotic routines
            _ => f64::NAN,
        }
    }
}

/// Second derivative of `f` at `x` by the 5-point central stencil.
pub fn second_derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h)) / (12.0 * h * h)
}

/// Stencil step used for KL Hessians.
pub fn hessian_step(x: f64) -> f64 {
    1e-3 * x.abs() + 1e-4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Hyper,
    Param,
}

/// Fisher information, entropy and KL terms of the sinusoid model that enter
/// the large-sample formulas.
pub struct SinusoidAsymptotics<'a> {
    model: &'a SinusoidModel,
    grid: HyperGrid,
    law: SinSqLaw,
}

impl<'a> SinusoidAsymptotics<'a> {
    pub fn new(model: &'a SinusoidModel, hyper_nodes: usize) -> Result<Self> {
        model.validate()?;
        let grid = model.hyper_grid(hyper_nodes)?;
        let c_min = model.noise_var() * grid.nodes[0] * 0.5;
        let law = SinSqLaw::new(model, c_min);
        Ok(Self { model, grid, law })
    }

    pub fn law(&self) -> &SinSqLaw {
        &self.law
    }

    pub fn grid(&self) -> &HyperGrid {
        &self.grid
    }

    /// `KL(P_{Y|X,W=w} ‖ P_{Y|X,W=w'})` averaged over the input law, by
    /// Simpson quadrature in `x`.
    pub fn kl_param(&self, w: f64, w2: f64) -> f64 {
        let s2 = self.model.noise_var();
        let lo = self.model.input_low;
        let hi = self.model.input_high;
        simpson(|x: f64| ((w - w2) * x.sin()).powi(2) / (2.0 * s2), lo, hi, 4096) / (hi - lo)
    }

    /// Per-sample Fisher information about `W`, from the KL Hessian.
    pub fn fisher_param(&self, w: f64) -> FisherInfo {
        let h = hessian_step(w);
        FisherInfo::scalar(second_derivative(|w2| self.kl_param(w, w2), w, h), w)
    }

    /// `KL(P_{Z|U=u} ‖ P_{Z|U=u'})` for a dataset of `m` pairs (`W`
    /// integrated out; the inputs share the same law under both).
    pub fn kl_hyper(&self, m: usize, u: f64, u2: f64) -> f64 {
        let s2 = self.model.noise_var();
        let (c, c2) = (s2 * u, s2 * u2);
        // E[s/(c'+s)] = 1 - c' E[1/(c'+s)]
        let ratio = 1.0 - c2 * self.law.mean_inv(m, c2);
        0.5 * ((c2 - c) / c * ratio + self.law.mean_log1p(m, c2) - self.law.mean_log1p(m, c))
    }

    /// Fisher information about `U` in a dataset of `m` pairs, from the KL
    /// Hessian by central differences.
    pub fn fisher_hyper(&self, m: usize, u: f64) -> FisherInfo {
        let h = hessian_step(u).min(0.25 * u);
        FisherInfo::scalar(second_derivative(|u2| self.kl_hyper(m, u, u2), u, h), u)
    }

    /// Same quantity from its closed form in the moments of `1/(c + S)`.
    pub fn fisher_hyper_analytic(&self, m: usize, u: f64) -> f64 {
        let c = self.model.noise_var() * u;
        let e1 = self.law.mean_inv(m, c);
        let e2 = self.law.mean_inv_sq(m, c);
        (1.0 - 2.0 * c * e1 + c * c * e2) / (2.0 * u * u)
    }

    /// `H(W | U) = E_U[½ ln(2πe / U)]`
    pub fn conditional_prior_entropy(&self) -> f64 {
        self.grid.expect(|u| 0.5 * (2.0 * PI * std::f64::consts::E / u).ln())
    }

    /// Hyperprior entropy by quadrature on the grid.
    pub fn hyperprior_entropy_quadrature(&self) -> f64 {
        self.grid.expect(|u| -self.model.ln_hyperprior_density(u))
    }

    /// `I(W; Z | U)` for `m` pairs.
    pub fn mi_param_given_hyper(&self, m: usize) -> f64 {
        let s2 = self.model.noise_var();
        self.grid.expect(|u| 0.5 * self.law.mean_log1p(m, s2 * u))
    }

    /// Right-hand side `(d/2) ln(n / 2πe) + H(·) + ½ E[ln |J|]`.
    pub fn rhs(&self, level: Level, n: usize, m: usize) -> f64 {
        let lead = 0.5 * (n as f64 / (2.0 * PI * std::f64::consts::E)).ln();
        match level {
            Level::Param => {
                // J_{Z|W} does not depend on w for this model
                let j = self.fisher_param(0.0).ln_det();
                lead + self.conditional_prior_entropy() + 0.5 * j
            }
            Level::Hyper => {
                let e_ln_j = self.grid.expect(|u| self.fisher_hyper(m, u).ln_det());
                lead + self.model.hyperprior_entropy() + 0.5 * e_ln_j
            }
        }
    }
}

/// Large-sample value of `n · S` at the requested level: `n = m` for the
/// per-task term `m S(Z → W | U)`, `n = N` for `m N S(Z_{1:N} → U)`.
pub fn asymptotic_sensitivity(
    model: &SinusoidModel,
    level: Level,
    n_tasks: usize,
    m: usize,
    hyper_nodes: usize,
) -> Result<BoundReport<f64>> {
    if m == 0 || (level == Level::Hyper && n_tasks == 0) {
        return Err(Error::Argument("sample counts must be positive".into()));
    }
    let a = SinusoidAsymptotics::new(model, hyper_nodes)?;
    let (kind, n) = match level {
        Level::Param => (BoundKind::AsymptoticParam, m),
        Level::Hyper => (BoundKind::AsymptoticHyper, n_tasks),
    };
    Ok(BoundReport {
        kind,
        value: a.rhs(level, n, m),
        inputs: Vec::new(),
        n_tasks,
        m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ex<T: Scalar>(q: Quantity, v: f64) -> BoundInput<T> {
        BoundInput {
            quantity: q,
            value: T::lit(v),
            provenance: Provenance::Exact,
        }
    }

    #[test]
    fn split_arithmetic() {
        let b = memr_ub_split::<f64>(ex(Quantity::MiHyperMeta, 2.0), ex(Quantity::MiParamGivenHyper, 0.5), 4, 2)
            .unwrap();
        assert_abs_diff_eq!(b.value, 0.5, epsilon = 1e-15);
        let z = memr_ub_split::<f64>(ex(Quantity::MiHyperMeta, 0.0), ex(Quantity::MiParamGivenHyper, 0.0), 3, 5)
            .unwrap();
        assert_eq!(z.value, 0.0);
        assert_eq!(b.provenance_label(), "bound:exact");
    }

    #[test]
    fn split_first_term_halves_when_n_doubles() {
        let h = ex::<f64>(Quantity::MiHyperMeta, 1.7);
        let zero = ex::<f64>(Quantity::MiParamGivenHyper, 0.0);
        let a = memr_ub_split(h, zero, 3, 2).unwrap().value;
        let b = memr_ub_split(h, zero, 6, 2).unwrap().value;
        assert_eq!(a, 2.0 * b);
    }

    #[test]
    fn split_rejects_zero_tasks_and_negative_inputs() {
        let h = ex::<f64>(Quantity::MiHyperMeta, 1.0);
        let p = ex::<f64>(Quantity::MiParamGivenHyper, 1.0);
        assert!(matches!(memr_ub_split(h, p, 0, 2), Err(Error::Argument(_))));
        let neg = ex::<f64>(Quantity::MiParamGivenHyper, -0.1);
        assert!(matches!(memr_ub_split(h, neg, 1, 2), Err(Error::Argument(_))));
    }

    #[test]
    fn subgaussian_arithmetic_and_scaling() {
        let h = ex::<f64>(Quantity::MiHyperMeta, 2.0);
        let p = ex::<f64>(Quantity::MiParamGivenHyper, 0.5);
        assert_abs_diff_eq!(memr_ub_subgaussian(1.0, h, p, 4, 2).unwrap().value, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(memr_ub_subgaussian(0.5, h, p, 4, 2).unwrap().value, 0.5, epsilon = 1e-15);
        let z = ex::<f64>(Quantity::MiHyperMeta, 0.0);
        let zp = ex::<f64>(Quantity::MiParamGivenHyper, 0.0);
        assert_eq!(memr_ub_subgaussian(1.0, z, zp, 7, 3).unwrap().value, 0.0);
        assert!(memr_ub_subgaussian(0.0, h, p, 4, 2).is_err());
        assert!(memr_ub_subgaussian(-1.0, h, p, 4, 2).is_err());
    }

    #[test]
    fn bounds_work_in_single_precision() {
        let b = memr_ub_split::<f32>(ex(Quantity::MiHyperMeta, 2.0), ex(Quantity::MiParamGivenHyper, 0.5), 4, 2)
            .unwrap();
        assert!((b.value - 0.5f32).abs() < 1e-6);
        assert_eq!(mer_ub::<f32>(ex(Quantity::MiParamData, 0.0), 3).unwrap().value, 0.0);
    }

    #[test]
    fn param_fisher_matches_analytic() {
        let model = SinusoidModel::default();
        let a = SinusoidAsymptotics::new(&model, 128).unwrap();
        let analytic = model.mean_sin_sq() / model.noise_var();
        for &w in &[-2.0, 0.0, 0.7] {
            let j = a.fisher_param(w).matrix[0];
            assert!((j - analytic).abs() <= 1e-4 * analytic, "{j} vs {analytic}");
        }
    }

    #[test]
    fn hyper_fisher_kl_hessian_matches_closed_form() {
        let model = SinusoidModel::default();
        let a = SinusoidAsymptotics::new(&model, 128).unwrap();
        for &(m, u) in &[(1, 0.5), (2, 10.0), (8, 40.0)] {
            let numeric = a.fisher_hyper(m, u).matrix[0];
            let closed = a.fisher_hyper_analytic(m, u);
            assert!((numeric - closed).abs() <= 1e-4 * closed, "m={m} u={u}: {numeric} vs {closed}");
            assert!(numeric > 0.0);
        }
    }

    #[test]
    fn kl_hyper_vanishes_on_the_diagonal_and_is_positive_off_it() {
        let model = SinusoidModel::default();
        let a = SinusoidAsymptotics::new(&model, 64).unwrap();
        assert_abs_diff_eq!(a.kl_hyper(2, 5.0, 5.0), 0.0, epsilon = 1e-14);
        assert!(a.kl_hyper(2, 5.0, 7.0) > 0.0);
        assert!(a.kl_hyper(2, 5.0, 3.0) > 0.0);
    }

    #[test]
    fn entropies_match_closed_forms() {
        let model = SinusoidModel::default();
        let a = SinusoidAsymptotics::new(&model, 512).unwrap();
        assert_abs_diff_eq!(a.hyperprior_entropy_quadrature(), model.hyperprior_entropy(), epsilon = 1e-4);
        // E ln U = ψ(α) - ln β
        let e_ln_u = statrs::function::gamma::digamma(model.hyper_shape) - model.hyper_rate.ln();
        let closed = 0.5 * ((2.0 * PI * std::f64::consts::E).ln() - e_ln_u);
        assert_abs_diff_eq!(a.conditional_prior_entropy(), closed, epsilon = 1e-4);
    }

    #[test]
    fn param_level_gap_shrinks_with_m() {
        let model = SinusoidModel::default();
        let a = SinusoidAsymptotics::new(&model, 512).unwrap();
        let gaps: Vec<f64> = [10, 100, 1000]
            .iter()
            .map(|&m| (a.mi_param_given_hyper(m) - a.rhs(Level::Param, m, m)).abs())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }
}
