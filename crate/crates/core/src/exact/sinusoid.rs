//! Quadrature / Monte Carlo exact values for [`SinusoidModel`].
//!
//! The hyperparameter is scalar, so every hyperposterior is represented on a
//! fixed [`HyperGrid`]; the per-task posterior given `u` is conjugate. Only the
//! outer expectation over environments is sampled.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::{ExactOptions, Method, Quantity, RiskReport};
use crate::error::{Error, Result};
use crate::model::{sample_environment_with, GaussStats, HierarchicalModel, HyperGrid, SinusoidModel};
use crate::numerics::{compensated_sum, linspace, log_sum_exp, mean_and_std_error, tanh_sinh, trapezoid_weights};
use crate::rng::label_id;

/// Law of `S_m = Σ_{i≤m} sin²(X_i)` for i.i.d. uniform inputs, through its
/// Laplace transform `φ(v)^m`, `φ(v) = E[exp(-v sin² X)]`.
///
/// Expectations of `ln(1 + S/c)`, `1/(c + S)` and `1/(c + S)²` are written as
/// one-dimensional integrals of `φ^m` over `r = ln v` and evaluated with the
/// trapezoid rule on a fixed grid.
#[derive(Debug, Clone)]
pub struct SinSqLaw {
    r: Vec<f64>,
    step: f64,
    phi: Vec<f64>,
}

impl SinSqLaw {
    /// Grid good for every `c >= c_min`.
    pub fn new(model: &SinusoidModel, c_min: f64) -> Self {
        let lo = -50.0;
        let hi = (80.0 / c_min).ln().max(5.0);
        let step = 0.01;
        let n = ((hi - lo) / step).ceil() as usize + 1;
        let r = linspace(lo, lo + step * (n - 1) as f64, n);
        let phi = r.iter().map(|&r| Self::phi_at(model, r.exp())).collect();
        Self { r, step, phi }
    }

    /// `φ(v)` by tanh-sinh quadrature on the pieces between zeros of `sin`.
    pub fn phi_at(model: &SinusoidModel, v: f64) -> f64 {
        let (lo, hi) = (model.input_low, model.input_high);
        let mut cuts = vec![lo];
        let mut k = (lo / PI).floor() as i64 + 1;
        while (k as f64) * PI < hi {
            cuts.push(k as f64 * PI);
            k += 1;
        }
        cuts.push(hi);
        let total: f64 = cuts
            .windows(2)
            .filter(|c| c[1] > c[0])
            .map(|c| tanh_sinh(|x: f64| (-v * x.sin().powi(2)).exp(), c[0], c[1], 1.0 / 32.0, 3.5))
            .sum();
        total / (hi - lo)
    }

    fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let terms = self.r.iter().zip(&self.phi).map(|(&r, &p)| f(r, p));
        // uniform grid; integrand vanishes at both ends
        compensated_sum(terms) * self.step
    }

    /// `E[ln(1 + S_m / c)]`
    pub fn mean_log1p(&self, m: usize, c: f64) -> f64 {
        let m = m as i32;
        self.integrate(|r, p| (1.0 - p.powi(m)) * (-c * r.exp()).exp())
    }

    /// `E[1 / (c + S_m)]`
    pub fn mean_inv(&self, m: usize, c: f64) -> f64 {
        let m = m as i32;
        self.integrate(|r, p| {
            let v = r.exp();
            v * (-c * v).exp() * p.powi(m)
        })
    }

    /// `E[1 / (c + S_m)²]`
    pub fn mean_inv_sq(&self, m: usize, c: f64) -> f64 {
        let m = m as i32;
        self.integrate(|r, p| {
            let v = r.exp();
            v * v * (-c * v).exp() * p.powi(m)
        })
    }
}

/// Monte Carlo quantities from one run of [`SinusoidExact::report`].
#[derive(Debug, Clone, PartialEq)]
pub struct SinusoidExactReport {
    pub reports: Vec<RiskReport>,
    /// Draws whose hyperposterior put more than `1e-8` mass on a grid end.
    pub tail_warnings: usize,
}

impl SinusoidExactReport {
    pub fn get(&self, q: Quantity) -> Option<&RiskReport> {
        self.reports.iter().find(|r| r.quantity == q)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct DrawTerms {
    kl: f64,
    hyper_meta: f64,
    param_data: f64,
    param_given_meta: f64,
    tail: bool,
}

pub struct SinusoidExact<'a> {
    model: &'a SinusoidModel,
    opts: ExactOptions,
    grid: HyperGrid,
}

impl<'a> SinusoidExact<'a> {
    pub fn new(model: &'a SinusoidModel, opts: &ExactOptions) -> Result<Self> {
        model.validate()?;
        opts.validate()?;
        Ok(Self {
            model,
            opts: opts.clone(),
            grid: model.hyper_grid(opts.hyper_nodes)?,
        })
    }

    pub fn grid(&self) -> &HyperGrid {
        &self.grid
    }

    /// `H(Y | X, W) = ½ ln(2πe σ²)`
    pub fn genie_risk(&self) -> f64 {
        0.5 * (2.0 * PI * std::f64::consts::E * self.model.noise_var()).ln()
    }

    fn ln_evidence_on_grid(&self, stats: &GaussStats) -> Vec<f64> {
        self.grid
            .nodes
            .iter()
            .map(|&u| self.model.ln_evidence(u, stats))
            .collect()
    }

    /// Posterior predictive of `Y` at `x` given the hyperposterior weights
    /// `omega` and the meta-test training statistics: a mixture of Gaussians
    /// `(weight, mean, variance)`.
    pub fn predictive_mixture(&self, omega: &[f64], stats: &GaussStats, x: f64) -> Vec<(f64, f64, f64)> {
        let top = omega.iter().copied().fold(0.0, f64::max);
        let f = x.sin();
        self.grid
            .nodes
            .iter()
            .zip(omega)
            .filter(|(_, &o)| o > 1e-18 * top)
            .map(|(&u, &o)| {
                let (mu, var) = self.model.posterior_given_hyper(u, stats);
                (o, mu * f, self.model.noise_var() + f * f * var)
            })
            .collect()
    }

    /// `KL(N(mean, σ²) ‖ mixture)` on the `y` grid.
    ///
    /// Components are advanced along the uniform grid with the multiplicative
    /// recurrence of a Gaussian, re-anchored exactly every 256 nodes; nodes
    /// where the scaled mixture underflows fall back to log-sum-exp.
    pub fn kl_to_mixture(&self, mean: f64, mixture: &[(f64, f64, f64)]) -> f64 {
        const BLOCK: usize = 256;
        let (ys, wts) = self.y_grid(mean);
        let comps = Self::log_components(mixture);
        let n = ys.len();
        let dy = (ys[n - 1] - ys[0]) / (n - 1) as f64;
        let c_max = comps.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        let jn = comps.len();
        let f: Vec<f64> = comps.iter().map(|&(_, _, k)| (-2.0 * k * dy * dy).exp()).collect();
        let mut g = vec![0.0; jn];
        let mut r = vec![0.0; jn];
        let mut q = vec![0.0; n];
        for (i, qi) in q.iter_mut().enumerate() {
            if i % BLOCK == 0 {
                for (j, &(c, mu, k)) in comps.iter().enumerate() {
                    let d = ys[i] - mu;
                    g[j] = (c - c_max - k * d * d).exp();
                    r[j] = (-k * (2.0 * d * dy + dy * dy)).exp();
                }
            }
            let mut acc = [0.0f64; 4];
            let mut gc = g.chunks_exact_mut(4);
            let mut rc = r.chunks_exact_mut(4);
            let mut fc = f.chunks_exact(4);
            for ((g4, r4), f4) in (&mut gc).zip(&mut rc).zip(&mut fc) {
                for l in 0..4 {
                    acc[l] += g4[l];
                    g4[l] *= r4[l];
                    r4[l] *= f4[l];
                }
            }
            let mut tail = 0.0;
            for ((gl, rl), fl) in gc.into_remainder().iter_mut().zip(rc.into_remainder()).zip(fc.remainder()) {
                tail += *gl;
                *gl *= *rl;
                *rl *= *fl;
            }
            *qi = (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail;
        }
        let sd = self.model.noise_std;
        let mut buf = vec![0.0; jn];
        let terms = (0..n).map(|i| {
            let y = ys[i];
            let ln_p = -0.5 * (2.0 * PI * sd * sd).ln() - (y - mean).powi(2) / (2.0 * sd * sd);
            let ln_q = if q[i] > 1e-250 {
                q[i].ln() + c_max
            } else {
                for (b, &(c, mu, k)) in buf.iter_mut().zip(&comps) {
                    *b = c - k * (y - mu) * (y - mu);
                }
                log_sum_exp(&buf)
            };
            wts[i] * ln_p.exp() * (ln_p - ln_q)
        });
        compensated_sum(terms)
    }

    /// Reference evaluation of [`Self::kl_to_mixture`] with a log-sum-exp at
    /// every node.
    pub fn kl_to_mixture_direct(&self, mean: f64, mixture: &[(f64, f64, f64)]) -> f64 {
        let sd = self.model.noise_std;
        let (ys, wts) = self.y_grid(mean);
        let comps = Self::log_components(mixture);
        let mut buf = vec![0.0; comps.len()];
        let terms = ys.iter().zip(&wts).map(|(&y, &wt)| {
            let ln_p = -0.5 * (2.0 * PI * sd * sd).ln() - (y - mean).powi(2) / (2.0 * sd * sd);
            for (b, &(c, mu, k)) in buf.iter_mut().zip(&comps) {
                *b = c - k * (y - mu) * (y - mu);
            }
            let ln_q = log_sum_exp(&buf);
            wt * ln_p.exp() * (ln_p - ln_q)
        });
        compensated_sum(terms)
    }

    fn y_grid(&self, mean: f64) -> (Vec<f64>, Vec<f64>) {
        let sd = self.model.noise_std;
        let ys = linspace(
            mean - self.opts.y_halfwidth * sd,
            mean + self.opts.y_halfwidth * sd,
            self.opts.y_nodes,
        );
        let wts = trapezoid_weights(&ys);
        (ys, wts)
    }

    /// `(ln weight - ½ ln 2πv, mean, 1 / 2v)` per component.
    fn log_components(mixture: &[(f64, f64, f64)]) -> Vec<(f64, f64, f64)> {
        mixture
            .iter()
            .map(|&(o, mu, v)| (o.ln() - 0.5 * (2.0 * PI * v).ln(), mu, 0.5 / v))
            .collect()
    }

    fn draw_terms(&self, n: usize, m: usize, seed: u64, replicate: u64, idx: u64) -> Result<DrawTerms> {
        let path = [label_id("exact-sinusoid"), replicate, idx];
        let env = sample_environment_with(self.model, n, m, seed, &path)?;
        let mut ln_meta = vec![0.0; self.grid.len()];
        let mut ln_meta_true = 0.0;
        for data in &env.meta_data {
            let stats = GaussStats::from_data(data);
            for (acc, l) in ln_meta.iter_mut().zip(self.ln_evidence_on_grid(&stats)) {
                *acc += l;
            }
            ln_meta_true += self.model.ln_evidence(env.u[0], &stats);
        }
        let test_stats = GaussStats::from_data(&env.test_train);
        let ln_test = self.ln_evidence_on_grid(&test_stats);

        let joint: Vec<f64> = ln_meta.iter().zip(&ln_test).map(|(a, b)| a + b).collect();
        let omega = self.grid.posterior(&joint);
        let tail = omega[0] > 1e-8 || omega[omega.len() - 1] > 1e-8;

        let x = env.test_point.x;
        let mixture = self.predictive_mixture(&omega, &test_stats, x);
        let kl = self.kl_to_mixture(env.test_param[0] * x.sin(), &mixture);

        let with_prior = |ln_lik: &[f64]| -> f64 {
            let v: Vec<f64> = self.grid.ln_weights.iter().zip(ln_lik).map(|(a, b)| a + b).collect();
            log_sum_exp(&v)
        };
        let ln_meta_marginal = with_prior(&ln_meta);
        let hyper_meta = if n == 0 { 0.0 } else { ln_meta_true - ln_meta_marginal };
        let ln_test_given_w = self.model.ln_dataset_likelihood(&env.test_train, &env.test_param)?;
        let param_data = ln_test_given_w - with_prior(&ln_test);
        let param_given_meta = ln_test_given_w - (with_prior(&joint) - ln_meta_marginal);

        Ok(DrawTerms {
            kl,
            hyper_meta,
            param_data,
            param_given_meta,
            tail,
        })
    }

    /// Per-draw terms over `opts.mc_draws` environments. Draw `i` always uses
    /// the same random stream, so the result is independent of scheduling and
    /// draws are shared across `N`.
    fn terms(&self, n: usize, m: usize, seed: u64, replicate: u64) -> Result<Vec<DrawTerms>> {
        if m == 0 {
            return Err(Error::Argument("m must be at least 1".into()));
        }
        (0..self.opts.mc_draws as u64)
            .into_par_iter()
            .map(|i| self.draw_terms(n, m, seed, replicate, i))
            .collect()
    }

    fn mc(&self, q: Quantity, values: Vec<f64>, n: usize, m: usize) -> RiskReport {
        let (value, std_error) = mean_and_std_error(&values);
        RiskReport {
            quantity: q,
            value,
            std_error,
            n_tasks: n,
            m,
            method: Method::QuadratureMc,
        }
    }

    /// MEMR as `E[KL(P_{Y|X,W} ‖ P_{Y|X,Z,Z_{1:N}})]`.
    pub fn memr(&self, n: usize, m: usize, seed: u64, replicate: u64) -> Result<RiskReport> {
        let t = self.terms(n, m, seed, replicate)?;
        Ok(self.mc(Quantity::Memr, t.iter().map(|d| d.kl).collect(), n, m))
    }

    /// MER: no meta-training data, prior `P_W` = hyperprior mixture.
    pub fn mer(&self, m: usize, seed: u64, replicate: u64) -> Result<RiskReport> {
        let r = self.memr(0, m, seed, replicate)?;
        Ok(RiskReport {
            quantity: Quantity::Mer,
            ..r
        })
    }

    /// `I(W; Z | U)` by quadrature over `u` and the law of `Σ sin² X_i`.
    pub fn mi_param_given_hyper(&self, m: usize) -> f64 {
        let c_min = self.model.noise_var() * self.grid.nodes[0];
        let law = SinSqLaw::new(self.model, c_min);
        self.mi_param_given_hyper_with(&law, m)
    }

    pub fn mi_param_given_hyper_with(&self, law: &SinSqLaw, m: usize) -> f64 {
        let s2 = self.model.noise_var();
        self.grid.expect(|u| 0.5 * law.mean_log1p(m, s2 * u))
    }

    /// All quantities for a cell.
    pub fn report(&self, n: usize, m: usize, seed: u64, replicate: u64) -> Result<SinusoidExactReport> {
        Ok(self.report_many(&[n], m, seed, replicate)?.remove(0))
    }

    /// Reports for several task counts; the conventional (`N = 0`) terms are
    /// computed once and shared.
    pub fn report_many(&self, ns: &[usize], m: usize, seed: u64, replicate: u64) -> Result<Vec<SinusoidExactReport>> {
        let conv = self.terms(0, m, seed, replicate)?;
        ns.iter()
            .map(|&n| {
                let t = if n == 0 {
                    conv.clone()
                } else {
                    self.terms(n, m, seed, replicate)?
                };
                Ok(self.assemble(n, m, &t, &conv))
            })
            .collect()
    }

    fn assemble(&self, n: usize, m: usize, t: &[DrawTerms], conv: &[DrawTerms]) -> SinusoidExactReport {
        let tail_warnings = t.iter().filter(|d| d.tail).count();
        if tail_warnings > 0 {
            log::warn!(
                "sinusoid exact (N={n}, m={m}): {tail_warnings} draws put > 1e-8 hyperposterior mass on a grid end"
            );
        }
        let genie = self.genie_risk();
        let memr = self.mc(Quantity::Memr, t.iter().map(|d| d.kl).collect(), n, m);
        let bayes = RiskReport {
            quantity: Quantity::BayesRisk,
            value: genie + memr.value,
            ..memr
        };
        let exact = |q, v| RiskReport {
            quantity: q,
            value: v,
            std_error: 0.0,
            n_tasks: n,
            m,
            method: Method::QuadratureMc,
        };
        let reports = vec![
            bayes,
            exact(Quantity::GenieRisk, genie),
            self.mc(Quantity::Mer, conv.iter().map(|d| d.kl).collect(), n, m),
            memr,
            // the test task is shared across N, so the difference is paired
            self.mc(
                Quantity::MetaGain,
                conv.iter().zip(t).map(|(c, d)| c.kl - d.kl).collect(),
                n,
                m,
            ),
            self.mc(Quantity::MiHyperMeta, t.iter().map(|d| d.hyper_meta).collect(), n, m),
            exact(Quantity::MiParamGivenHyper, self.mi_param_given_hyper(m)),
            self.mc(
                Quantity::MiParamGivenMetadata,
                t.iter().map(|d| d.param_given_meta).collect(),
                n,
                m,
            ),
            self.mc(Quantity::MiParamData, t.iter().map(|d| d.param_data).collect(), n, m),
        ];
        SinusoidExactReport {
            reports,
            tail_warnings,
        }
    }

    /// Hyperposterior weights on the grid after observing `meta`.
    pub fn hyperposterior(&self, meta: &[crate::model::Dataset]) -> Vec<f64> {
        let mut ln = vec![0.0; self.grid.len()];
        for d in meta {
            for (a, l) in ln.iter_mut().zip(self.ln_evidence_on_grid(&GaussStats::from_data(d))) {
                *a += l;
            }
        }
        self.grid.posterior(&ln)
    }

    pub fn model(&self) -> &SinusoidModel {
        self.model
    }

    /// Checks the capability of `which` for this family.
    pub fn supports(which: Quantity) -> bool {
        !matches!(which, Quantity::MetaGain)
    }
}

impl SinusoidModel {
    /// `I(W; Z | U = u)` for fixed inputs: `½ ln(1 + Σ sin² x_i / (σ² u))`.
    pub fn mi_param_given_hyper_fixed_inputs(&self, u: f64, inputs: &[f64]) -> f64 {
        let ss: f64 = inputs.iter().map(|x| x.sin().powi(2)).sum();
        0.5 * (ss / (self.noise_var() * u)).ln_1p()
    }
}

#[allow(dead_code)]
fn _assert_model_object_safe(_: &dyn HierarchicalModel) {}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_opts() -> ExactOptions {
        ExactOptions {
            mc_draws: 300,
            hyper_nodes: 256,
            y_nodes: 401,
            ..Default::default()
        }
    }

    #[test]
    fn phi_matches_bessel_form_on_a_full_period() {
        let m = SinusoidModel {
            input_low: 0.0,
            input_high: PI,
            ..Default::default()
        };
        for &v in &[0.1, 3.0, 40.0] {
            // e^{-v/2} I0(v/2), I0 by its power series
            let z: f64 = v / 2.0;
            let mut term = 1.0;
            let mut i0 = 1.0;
            for k in 1..200 {
                term *= (z / 2.0).powi(2) / (k as f64 * k as f64);
                i0 += term;
            }
            assert_abs_diff_eq!(SinSqLaw::phi_at(&m, v), (-z).exp() * i0, epsilon = 1e-12);
        }
    }

    #[test]
    fn laplace_identities_match_monte_carlo() {
        use crate::rng::stream;
        use rand::Rng;
        let model = SinusoidModel::default();
        let law = SinSqLaw::new(&model, 1e-4);
        let mut rng = stream(5, &[]);
        let m = 3;
        let c = 0.2;
        let n = 400_000;
        let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let s: f64 = (0..m).map(|_| rng.random_range(-5.0f64..5.0).sin().powi(2)).sum();
            a += (s / c).ln_1p();
            b += 1.0 / (c + s);
            d += 1.0 / (c + s).powi(2);
        }
        let n = n as f64;
        assert_abs_diff_eq!(law.mean_log1p(m, c), a / n, epsilon = 5e-3);
        assert_abs_diff_eq!(law.mean_inv(m, c), b / n, epsilon = 2e-2 * b / n);
        assert_abs_diff_eq!(law.mean_inv_sq(m, c), d / n, epsilon = 5e-2 * d / n);
    }

    #[test]
    fn recurrence_kl_matches_direct_evaluation() {
        let model = SinusoidModel::default();
        let e = SinusoidExact::new(&model, &ExactOptions::default()).unwrap();
        let mixtures = [
            vec![(1.0, 0.0, 0.01)],
            vec![(0.3, 0.05, 0.012), (0.7, -0.2, 0.05), (1e-12, 3.0, 0.01)],
            // far from the y grid: the mixture underflows on part of it
            vec![(0.5, 4.0, 0.0101), (0.5, 4.5, 0.0102)],
            (1..=13).map(|j| (1.0 / 13.0, 0.02 * j as f64, 0.01 + 0.003 * j as f64)).collect(),
        ];
        for mix in &mixtures {
            let a = e.kl_to_mixture(0.1, mix);
            let b = e.kl_to_mixture_direct(0.1, mix);
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
        // a single component equal to the reference has zero divergence
        assert_abs_diff_eq!(e.kl_to_mixture(0.3, &[(1.0, 0.3, 0.01)]), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn genie_risk_is_gaussian_entropy() {
        let model = SinusoidModel::default();
        let e = SinusoidExact::new(&model, &small_opts()).unwrap();
        assert_abs_diff_eq!(e.genie_risk(), -0.8836, epsilon = 1e-4);
    }

    #[test]
    fn fixed_input_mi_closed_form_and_quadrature() {
        let model = SinusoidModel::default();
        let v = model.mi_param_given_hyper_fixed_inputs(1.0, &[std::f64::consts::FRAC_PI_2]);
        assert_abs_diff_eq!(v, 0.5 * 101f64.ln(), epsilon = 1e-12);
        // 2-D quadrature of I(W; Y) for w ~ N(0, 1), y | w ~ N(w, 0.01)
        let s2: f64 = 0.01;
        let py_var = 1.0 + s2;
        let ws: Vec<f64> = linspace(-8.0, 8.0, 801);
        let ww = trapezoid_weights(&ws);
        let mut acc = 0.0;
        for (&w, &dw) in ws.iter().zip(&ww) {
            let pw = (-w * w / 2.0).exp() / (2.0 * PI).sqrt();
            let ys: Vec<f64> = linspace(w - 1.0, w + 1.0, 401);
            let wy = trapezoid_weights(&ys);
            for (&y, &dy) in ys.iter().zip(&wy) {
                let ln_cond = -0.5 * (2.0 * PI * s2).ln() - (y - w).powi(2) / (2.0 * s2);
                let ln_marg = -0.5 * (2.0 * PI * py_var).ln() - y * y / (2.0 * py_var);
                acc += dw * dy * pw * ln_cond.exp() * (ln_cond - ln_marg);
            }
        }
        assert_abs_diff_eq!(acc, v, epsilon = 1e-6);
    }

    #[test]
    fn mi_param_given_hyper_quadrature_matches_monte_carlo() {
        use crate::rng::stream;
        use rand::RngCore;
        let model = SinusoidModel::default();
        let e = SinusoidExact::new(&model, &small_opts()).unwrap();
        let q = e.mi_param_given_hyper(2);
        let mut rng = stream(9, &[]);
        let n = 200_000;
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            let u = model.sample_hyper(&mut rng as &mut dyn RngCore)[0];
            let xs = [model.sample_input(&mut rng), model.sample_input(&mut rng)];
            vals.push(model.mi_param_given_hyper_fixed_inputs(u, &xs));
        }
        let (mean, se) = mean_and_std_error(&vals);
        assert!((q - mean).abs() < 4.0 * se, "{q} vs {mean} ± {se}");
    }

    #[test]
    fn memr_equals_mer_without_meta_data() {
        let model = SinusoidModel::default();
        let e = SinusoidExact::new(&model, &small_opts()).unwrap();
        let a = e.memr(0, 2, 1, 0).unwrap();
        let b = e.mer(2, 1, 0).unwrap();
        assert_eq!(a.value, b.value);
        assert!(a.value > 0.0);
    }

    #[test]
    fn report_is_deterministic_and_ordered() {
        let model = SinusoidModel::default();
        let opts = ExactOptions {
            mc_draws: 200,
            ..small_opts()
        };
        let e = SinusoidExact::new(&model, &opts).unwrap();
        let r1 = e.report(2, 2, 4, 0).unwrap();
        let r2 = e.report(2, 2, 4, 0).unwrap();
        assert_eq!(r1, r2);
        let memr = r1.get(Quantity::Memr).unwrap();
        let mer = r1.get(Quantity::Mer).unwrap();
        assert!(memr.value >= -memr.tolerance());
        assert!(mer.value >= memr.value - 3.0 * (mer.std_error + memr.std_error));
        for r in &r1.reports {
            if r.quantity.is_nonnegative() {
                assert!(r.value >= -r.tolerance(), "{:?}", r);
            }
        }
    }
}
