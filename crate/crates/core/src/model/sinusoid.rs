use std::f64::consts::PI;

use rand::RngCore;
use rand_distr::{Distribution, Gamma, Normal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaCdf};
use statrs::function::gamma::ln_gamma;

use super::{check_dim, Capabilities, HierarchicalModel, HyperSupport, Sample};
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, logspace, trapezoid_weights};

/// `Y = W sin(X) + ξ`, `ξ ~ N(0, noise_std²)`, `W | U ~ N(0, 1/U)`,
/// `U ~ Gamma(shape, rate)`, `X ~ Uniform[input_low, input_high]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SinusoidModel {
    pub hyper_shape: f64,
    pub hyper_rate: f64,
    pub noise_std: f64,
    pub input_low: f64,
    pub input_high: f64,
}

impl Default for SinusoidModel {
    fn default() -> Self {
        Self {
            hyper_shape: 2.0,
            hyper_rate: 0.2,
            noise_std: 0.1,
            input_low: -5.0,
            input_high: 5.0,
        }
    }
}

/// Sufficient statistics of a dataset for the linear-Gaussian likelihood.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GaussStats {
    pub count: usize,
    /// `Σ sin²(x_i)`
    pub ss: f64,
    /// `Σ sin(x_i) y_i`
    pub sy: f64,
    /// `Σ y_i²`
    pub yy: f64,
}

impl GaussStats {
    pub fn from_data(data: &[Sample]) -> Self {
        data.iter().fold(Self::default(), |mut acc, s| {
            let f = s.x.sin();
            acc.count += 1;
            acc.ss += f * f;
            acc.sy += f * s.y;
            acc.yy += s.y * s.y;
            acc
        })
    }
}

impl SinusoidModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hyper_shape", self.hyper_shape),
            ("hyper_rate", self.hyper_rate),
            ("noise_std", self.noise_std),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.input_low < self.input_high) {
            return Err(Error::Argument("input_low must be below input_high".into()));
        }
        Ok(())
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_std * self.noise_std
    }

    fn positive_u(u: &[f64]) -> Result<f64> {
        check_dim("u", u, 1)?;
        if u[0] > 0.0 {
            Ok(u[0])
        } else {
            Err(Error::Domain {
                field: "u",
                value: u[0],
            })
        }
    }

    pub fn ln_hyperprior_density(&self, u: f64) -> f64 {
        let (a, b) = (self.hyper_shape, self.hyper_rate);
        a * b.ln() - ln_gamma(a) + (a - 1.0) * u.ln() - b * u
    }

    /// Per-task conjugate posterior `(mean, variance)` of `W` given `u` and data.
    pub fn posterior_given_hyper(&self, u: f64, stats: &GaussStats) -> (f64, f64) {
        let precision = u + stats.ss / self.noise_var();
        let mean = stats.sy / (self.noise_var() * precision);
        (mean, 1.0 / precision)
    }

    /// `ln P(y_{1:m} | x_{1:m}, u)` with `W` integrated out.
    pub fn ln_evidence(&self, u: f64, stats: &GaussStats) -> f64 {
        let s2 = self.noise_var();
        let m = stats.count as f64;
        let precision = u + stats.ss / s2;
        -0.5 * m * (2.0 * PI * s2).ln() - 0.5 * (stats.ss / (s2 * u)).ln_1p() - stats.yy / (2.0 * s2)
            + stats.sy * stats.sy / (2.0 * s2 * s2 * precision)
    }

    /// `E_X[sin² X]` for the uniform input law, in closed form.
    pub fn mean_sin_sq(&self) -> f64 {
        let (lo, hi) = (self.input_low, self.input_high);
        0.5 - ((2.0 * hi).sin() - (2.0 * lo).sin()) / (4.0 * (hi - lo))
    }

    /// Differential entropy of the Gamma hyperprior.
    pub fn hyperprior_entropy(&self) -> f64 {
        let (a, b) = (self.hyper_shape, self.hyper_rate);
        a - b.ln() + ln_gamma(a) + (1.0 - a) * statrs::function::gamma::digamma(a)
    }

    pub fn hyper_grid(&self, nodes: usize) -> Result<HyperGrid> {
        HyperGrid::new(self, nodes, 1e-10)
    }
}

/// Quadrature over the scalar hyperparameter: log-spaced nodes between the
/// `tail` and `1 - tail` quantiles of the hyperprior, trapezoid weights.
#[derive(Debug, Clone)]
pub struct HyperGrid {
    pub nodes: Vec<f64>,
    /// `ln(P_U(u_j) Δ_j)`, normalized so the weights sum to one.
    pub ln_weights: Vec<f64>,
}

impl HyperGrid {
    pub fn new(model: &SinusoidModel, nodes: usize, tail: f64) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::Argument("hyper grid needs at least 2 nodes".into()));
        }
        let g = GammaCdf::new(model.hyper_shape, model.hyper_rate)
            .map_err(|e| Error::Argument(e.to_string()))?;
        let lo = g.inverse_cdf(tail);
        let hi = g.inverse_cdf(1.0 - tail);
        let us = logspace(lo, hi, nodes);
        let mut ln_w: Vec<f64> = trapezoid_weights(&us)
            .iter()
            .zip(&us)
            .map(|(w, &u)| w.ln() + model.ln_hyperprior_density(u))
            .collect();
        let z = log_sum_exp(&ln_w);
        ln_w.iter_mut().for_each(|v| *v -= z);
        Ok(Self {
            nodes: us,
            ln_weights: ln_w,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Normalized posterior weights `ω_j ∝ w_j exp(ln_lik_j)`.
    pub fn posterior(&self, ln_lik: &[f64]) -> Vec<f64> {
        let lp: Vec<f64> = self
            .ln_weights
            .iter()
            .zip(ln_lik)
            .map(|(a, b)| a + b)
            .collect();
        let z = log_sum_exp(&lp);
        lp.into_iter().map(|v| (v - z).exp()).collect()
    }

    /// `E[g(U)]` under the (prior) grid weights.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        crate::numerics::compensated_sum(
            self.nodes
                .iter()
                .zip(&self.ln_weights)
                .map(|(&u, &lw)| lw.exp() * g(u)),
        )
    }
}

impl HierarchicalModel for SinusoidModel {
    fn name(&self) -> &'static str {
        "sinusoid"
    }
    fn hyper_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            enumerable: false,
            conjugate_given_hyper: true,
        }
    }
    fn hyper_support(&self) -> HyperSupport {
        HyperSupport::Positive
    }

    fn sample_hyper(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let g = Gamma::new(self.hyper_shape, 1.0 / self.hyper_rate).expect("validated gamma");
        vec![g.sample(rng)]
    }

    fn sample_param(&self, u: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let n = Normal::new(0.0, 1.0 / u[0].sqrt()).expect("positive precision");
        vec![n.sample(rng)]
    }

    fn sample_input(&self, rng: &mut dyn RngCore) -> f64 {
        Uniform::new(self.input_low, self.input_high)
            .expect("validated bounds")
            .sample(rng)
    }

    fn sample_label(&self, x: f64, w: &[f64], rng: &mut dyn RngCore) -> f64 {
        let noise = Normal::new(0.0, self.noise_std).expect("positive noise");
        w[0] * x.sin() + noise.sample(rng)
    }

    fn ln_hyperprior(&self, u: &[f64]) -> Result<f64> {
        Ok(self.ln_hyperprior_density(Self::positive_u(u)?))
    }

    fn ln_prior(&self, w: &[f64], u: &[f64]) -> Result<f64> {
        let u = Self::positive_u(u)?;
        check_dim("w", w, 1)?;
        Ok(0.5 * (u / (2.0 * PI)).ln() - 0.5 * u * w[0] * w[0])
    }

    fn ln_likelihood(&self, y: f64, x: f64, w: &[f64]) -> Result<f64> {
        check_dim("w", w, 1)?;
        let r = y - w[0] * x.sin();
        Ok(-0.5 * (2.0 * PI * self.noise_var()).ln() - r * r / (2.0 * self.noise_var()))
    }

    fn grad_w_ln_likelihood(&self, y: f64, x: f64, w: &[f64]) -> Result<Vec<f64>> {
        check_dim("w", w, 1)?;
        let f = x.sin();
        Ok(vec![(y - w[0] * f) * f / self.noise_var()])
    }

    fn grad_w_ln_prior(&self, w: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let u = Self::positive_u(u)?;
        check_dim("w", w, 1)?;
        Ok(vec![-u * w[0]])
    }

    fn grad_u_ln_prior(&self, w: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let u = Self::positive_u(u)?;
        check_dim("w", w, 1)?;
        Ok(vec![0.5 / u - 0.5 * w[0] * w[0]])
    }

    fn grad_u_ln_hyperprior(&self, u: &[f64]) -> Result<Vec<f64>> {
        let u = Self::positive_u(u)?;
        Ok(vec![(self.hyper_shape - 1.0) / u - self.hyper_rate])
    }

    /// `P_W` is a Student-t with `2α` degrees of freedom and scale
    /// `√(β/α)`, so `∇ ln P_W(w) = -(2α + 1) w / (2β + w²)`.
    fn grad_w_ln_marginal_prior(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_dim("w", w, 1)?;
        let (a, b) = (self.hyper_shape, self.hyper_rate);
        Ok(vec![-(2.0 * a + 1.0) * w[0] / (2.0 * b + w[0] * w[0])])
    }

    fn genie_risk(&self) -> Result<f64> {
        Ok(0.5 * (2.0 * PI * std::f64::consts::E * self.noise_var()).ln())
    }

    fn hyper_features(&self, u: &[f64]) -> Vec<f64> {
        vec![u[0].ln()]
    }

    /// `(sin x, y)`: `Y` depends on `X` only through `sin X`.
    fn sample_features(&self, s: &Sample) -> Vec<f64> {
        vec![s.x.sin(), s.y]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelPoint;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = SinusoidModel::default();
        let mut rng = stream(3, &[1]);
        let h = 1e-5;
        for _ in 0..200 {
            let u = rng.random_range(0.05..40.0);
            let w = rng.random_range(-3.0..3.0);
            let x = rng.random_range(-5.0..5.0);
            let y = rng.random_range(-3.0..3.0);
            let g_lik = m.grad_w_ln_likelihood(y, x, &[w]).unwrap()[0];
            let fd = central_diff(|w| m.ln_likelihood(y, x, &[w]).unwrap(), w, h);
            assert!(rel_err(g_lik, fd) < 1e-5, "{g_lik} vs {fd}");
            let g = m.grad_w_ln_prior(&[w], &[u]).unwrap()[0];
            let fd = central_diff(|w| m.ln_prior(&[w], &[u]).unwrap(), w, h);
            assert!(rel_err(g, fd) < 1e-5);
            let g = m.grad_u_ln_prior(&[w], &[u]).unwrap()[0];
            let fd = central_diff(|u| m.ln_prior(&[w], &[u]).unwrap(), u, h.min(u / 10.0));
            assert!(rel_err(g, fd) < 1e-5, "{g} vs {fd} at u={u}");
            let g = m.grad_u_ln_hyperprior(&[u]).unwrap()[0];
            let fd = central_diff(|u| m.ln_hyperprior(&[u]).unwrap(), u, h.min(u / 10.0));
            assert!(rel_err(g, fd) < 1e-5);
        }
    }

    #[test]
    fn named_gradient_values() {
        let m = SinusoidModel::default();
        assert_eq!(m.grad_w_ln_prior(&[0.0], &[3.7]).unwrap()[0], 0.0);
        let g = m
            .grad_w_ln_likelihood(0.5, std::f64::consts::FRAC_PI_2, &[0.5])
            .unwrap()[0];
        assert_abs_diff_eq!(g, 0.0, epsilon = 1e-12);
        assert_eq!(m.grad_w_ln_prior(&[1.0], &[2.0]).unwrap()[0], -2.0);
    }

    #[test]
    fn out_of_support_is_a_domain_error() {
        let m = SinusoidModel::default();
        let p = ModelPoint {
            u: vec![-1.0],
            w: vec![0.0],
            x: 0.0,
            y: 0.0,
        };
        match m.log_densities_and_grads(&p) {
            Err(Error::Domain { field, .. }) => assert_eq!(field, "u"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            m.ln_prior(&[f64::NAN], &[1.0]),
            Err(Error::Domain { field: "w", .. })
        ));
    }

    #[test]
    fn conjugate_posterior_matches_grid_normalization() {
        let m = SinusoidModel::default();
        let data = [
            Sample { x: 0.3, y: 0.2 },
            Sample { x: -2.0, y: -0.4 },
        ];
        let stats = GaussStats::from_data(&data);
        let u = 1.7;
        let (mean, var) = m.posterior_given_hyper(u, &stats);
        let ws = crate::numerics::linspace(mean - 12.0 * var.sqrt(), mean + 12.0 * var.sqrt(), 4001);
        let dens: Vec<f64> = ws
            .iter()
            .map(|&w| {
                (m.ln_prior(&[w], &[u]).unwrap() + m.ln_dataset_likelihood(&data, &[w]).unwrap()).exp()
            })
            .collect();
        let wts = trapezoid_weights(&ws);
        let z: f64 = dens.iter().zip(&wts).map(|(d, w)| d * w).sum();
        // grid normalizer is the evidence
        assert_abs_diff_eq!(z.ln(), m.ln_evidence(u, &stats), epsilon = 1e-8);
        let tv: f64 = ws
            .iter()
            .zip(&dens)
            .zip(&wts)
            .map(|((&w, &d), &dw)| {
                let closed = (-(w - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
                (d / z - closed).abs() * dw
            })
            .sum::<f64>()
            * 0.5;
        assert!(tv < 1e-6, "tv = {tv}");
    }

    #[test]
    fn marginal_prior_gradient_is_student_t() {
        let m = SinusoidModel::default();
        for &w in &[-2.0, -0.3, 0.0, 0.7, 1.5] {
            let g = m.grad_w_ln_marginal_prior(&[w]).unwrap()[0];
            // -w E[U | W = w] with the expectation on the hyper grid
            let grid = m.hyper_grid(512).unwrap();
            let ln_lik: Vec<f64> = grid.nodes.iter().map(|&u| 0.5 * u.ln() - 0.5 * u * w * w).collect();
            let post = grid.posterior(&ln_lik);
            let mean_u: f64 = post.iter().zip(&grid.nodes).map(|(p, u)| p * u).sum();
            assert_abs_diff_eq!(g, -w * mean_u, epsilon = 1e-6 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn hyper_grid_reproduces_gamma_moments_and_entropy() {
        let m = SinusoidModel::default();
        let g = m.hyper_grid(512).unwrap();
        assert_abs_diff_eq!(g.expect(|u| u), 10.0, epsilon = 1e-4);
        assert_abs_diff_eq!(g.expect(|u| (u - 10.0).powi(2)), 50.0, epsilon = 1e-2);
        let quad_entropy = g.expect(|u| -m.ln_hyperprior_density(u));
        assert_abs_diff_eq!(quad_entropy, m.hyperprior_entropy(), epsilon = 1e-4);
    }

    #[test]
    fn mean_sin_sq_matches_quadrature() {
        let m = SinusoidModel::default();
        let q = crate::numerics::simpson(|x: f64| x.sin().powi(2), -5.0, 5.0, 2000) / 10.0;
        assert_abs_diff_eq!(m.mean_sin_sq(), q, epsilon = 1e-9);
    }
}
