use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{check_dim, Capabilities, HierarchicalModel, HyperSupport};
use crate::error::{Error, Result};
use crate::numerics::{ln_sigmoid, sigmoid};

/// Largest outcome count `enumerate_outcomes` materializes by default.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 1 << 26;

/// Bayesian logistic regression over a finite parameter grid.
///
/// The hyperparameter selects a `subset_size`-subset of `candidate_grid`
/// (uniform hyperprior); `W | U` is uniform on the subset and
/// `P(Y = 1 | X, W) = σ(slope (W X + offset))`. Inputs are drawn uniformly
/// from the finite `input_design`, independently of everything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscreteLogisticModel {
    pub candidate_grid: Vec<f64>,
    pub subset_size: usize,
    pub slope: f64,
    pub offset: f64,
    pub input_design: Vec<f64>,
}

impl Default for DiscreteLogisticModel {
    fn default() -> Self {
        Self {
            candidate_grid: vec![1.6, 1.2, 0.8, 0.4, -0.4, -0.8, -1.2, -1.6],
            subset_size: 2,
            slope: 4.0,
            offset: 0.2,
            input_design: vec![-1.0, 1.0],
        }
    }
}

/// One observed pair in enumeration order: index into the input design and
/// the binary label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Outcome {
    pub x_index: usize,
    pub label: u8,
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

impl DiscreteLogisticModel {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_grid.is_empty() || self.input_design.is_empty() {
            return Err(Error::Argument("candidate grid and input design must be non-empty".into()));
        }
        if self.subset_size == 0 || self.subset_size > self.candidate_grid.len() {
            return Err(Error::Argument(format!(
                "subset_size {} must be in 1..={}",
                self.subset_size,
                self.candidate_grid.len()
            )));
        }
        for (i, a) in self.candidate_grid.iter().enumerate() {
            if !a.is_finite() || self.candidate_grid[..i].contains(a) {
                return Err(Error::Argument("candidate grid values must be finite and distinct".into()));
            }
        }
        if !self.slope.is_finite() || !self.offset.is_finite() || self.input_design.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("slope, offset and inputs must be finite".into()));
        }
        Ok(())
    }

    /// Same grid with the subset spanning every candidate: the conventional
    /// learner's view, whose prior is the marginal `P_W` of `self`.
    pub fn conventional(&self) -> Self {
        Self {
            subset_size: self.candidate_grid.len(),
            ..self.clone()
        }
    }

    /// Hyperparameter space: index subsets in lexicographic order.
    pub fn subsets(&self) -> Vec<Vec<usize>> {
        combinations(self.candidate_grid.len(), self.subset_size)
    }

    pub fn hyper_values(&self, subset: &[usize]) -> Vec<f64> {
        subset.iter().map(|&i| self.candidate_grid[i]).collect()
    }

    pub fn prob_one(&self, x: f64, w: f64) -> f64 {
        sigmoid(self.slope * (w * x + self.offset))
    }

    fn grid_index(&self, w: f64) -> Option<usize> {
        self.candidate_grid.iter().position(|&c| c == w)
    }

    fn subset_of(&self, u: &[f64]) -> Result<Vec<usize>> {
        check_dim("u", u, self.subset_size)?;
        let mut idx = Vec::with_capacity(u.len());
        for &v in u {
            match self.grid_index(v) {
                Some(i) if !idx.contains(&i) => idx.push(i),
                _ => return Err(Error::Domain { field: "u", value: v }),
            }
        }
        Ok(idx)
    }

    /// Every joint label/input sequence over `n_tasks` meta-training tasks,
    /// the meta-test training set and the test point, with its probability.
    ///
    /// Order: task-major meta-training pairs, then the `m` meta-test training
    /// pairs, then the test pair.
    pub fn enumerate_outcomes(
        &self,
        n_tasks: usize,
        m: usize,
        budget: u128,
    ) -> Result<Vec<(Vec<Outcome>, f64)>> {
        self.validate()?;
        if m == 0 {
            return Err(Error::Argument("m must be at least 1".into()));
        }
        let per_pair = 2 * self.input_design.len() as u128;
        let len = m * (n_tasks + 1) + 1;
        let required = (0..len).try_fold(1u128, |acc, _| acc.checked_mul(per_pair));
        let required = match required {
            Some(r) if r <= budget => r as usize,
            other => {
                return Err(Error::Capacity {
                    what: "outcome enumeration",
                    required: other.unwrap_or(u128::MAX),
                    allowed: budget,
                })
            }
        };

        let subsets = self.subsets();
        let p_x = 1.0 / self.input_design.len() as f64;
        let p_u = 1.0 / subsets.len() as f64;
        let p_w = 1.0 / self.subset_size as f64;
        // per (w, pair-code) probability, pair code = 2 * x_index + label
        let pair_prob: Vec<Vec<f64>> = self
            .candidate_grid
            .iter()
            .map(|&w| {
                (0..per_pair as usize)
                    .map(|c| {
                        let p1 = self.prob_one(self.input_design[c / 2], w);
                        p_x * if c % 2 == 1 { p1 } else { 1.0 - p1 }
                    })
                    .collect()
            })
            .collect();

        let mut out = Vec::with_capacity(required);
        let mut codes = vec![0usize; len];
        for _ in 0..required {
            let mut prob = 0.0;
            for s in &subsets {
                let mut joint = p_u;
                for t in 0..=n_tasks {
                    let block = if t < n_tasks {
                        &codes[t * m..(t + 1) * m]
                    } else {
                        &codes[n_tasks * m..]
                    };
                    let task: f64 = s
                        .iter()
                        .map(|&wi| p_w * block.iter().map(|&c| pair_prob[wi][c]).product::<f64>())
                        .sum();
                    joint *= task;
                }
                prob += joint;
            }
            let seq = codes
                .iter()
                .map(|&c| Outcome {
                    x_index: c / 2,
                    label: (c % 2) as u8,
                })
                .collect();
            out.push((seq, prob));
            // odometer increment, last position fastest
            for c in codes.iter_mut().rev() {
                *c += 1;
                if *c < per_pair as usize {
                    break;
                }
                *c = 0;
            }
        }
        Ok(out)
    }
}

impl HierarchicalModel for DiscreteLogisticModel {
    fn name(&self) -> &'static str {
        "logistic"
    }
    fn hyper_dim(&self) -> usize {
        self.subset_size
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            enumerable: true,
            conjugate_given_hyper: false,
        }
    }
    fn hyper_support(&self) -> HyperSupport {
        HyperSupport::Discrete
    }

    fn sample_hyper(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let subsets = self.subsets();
        let s = &subsets[rng.random_range(0..subsets.len())];
        self.hyper_values(s)
    }

    fn sample_param(&self, u: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        vec![u[rng.random_range(0..u.len())]]
    }

    fn sample_input(&self, rng: &mut dyn RngCore) -> f64 {
        self.input_design[rng.random_range(0..self.input_design.len())]
    }

    fn sample_label(&self, x: f64, w: &[f64], rng: &mut dyn RngCore) -> f64 {
        if rng.random::<f64>() < self.prob_one(x, w[0]) {
            1.0
        } else {
            0.0
        }
    }

    /// Every candidate is equally likely a priori (uniform subsets), and the
    /// inputs are uniform on the design.
    fn genie_risk(&self) -> Result<f64> {
        self.validate()?;
        let total: f64 = self
            .candidate_grid
            .iter()
            .flat_map(|&w| self.input_design.iter().map(move |&x| (w, x)))
            .map(|(w, x)| crate::numerics::binary_entropy(self.prob_one(x, w)))
            .sum();
        Ok(total / (self.candidate_grid.len() * self.input_design.len()) as f64)
    }

    fn ln_hyperprior(&self, u: &[f64]) -> Result<f64> {
        self.subset_of(u)?;
        Ok(-(self.subsets().len() as f64).ln())
    }

    fn ln_prior(&self, w: &[f64], u: &[f64]) -> Result<f64> {
        let subset = self.subset_of(u)?;
        check_dim("w", w, 1)?;
        match self.grid_index(w[0]) {
            None => Err(Error::Domain { field: "w", value: w[0] }),
            Some(i) if subset.contains(&i) => Ok(-(self.subset_size as f64).ln()),
            Some(_) => Ok(f64::NEG_INFINITY),
        }
    }

    fn ln_likelihood(&self, y: f64, x: f64, w: &[f64]) -> Result<f64> {
        check_dim("w", w, 1)?;
        let z = self.slope * (w[0] * x + self.offset);
        if y == 1.0 {
            Ok(ln_sigmoid(z))
        } else if y == 0.0 {
            Ok(ln_sigmoid(-z))
        } else {
            Err(Error::Domain { field: "y", value: y })
        }
    }

    fn grad_w_ln_likelihood(&self, y: f64, x: f64, w: &[f64]) -> Result<Vec<f64>> {
        check_dim("w", w, 1)?;
        if y != 0.0 && y != 1.0 {
            return Err(Error::Domain { field: "y", value: y });
        }
        Ok(vec![self.slope * x * (y - self.prob_one(x, w[0]))])
    }

    fn grad_w_ln_prior(&self, _w: &[f64], _u: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Capability("prior gradient on a discrete parameter grid".into()))
    }

    fn grad_u_ln_prior(&self, _w: &[f64], _u: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Capability("hyperparameter gradient on a discrete subset space".into()))
    }

    fn grad_u_ln_hyperprior(&self, _u: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Capability("hyperparameter gradient on a discrete subset space".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use std::collections::HashMap;

    #[test]
    fn subsets_enumerate_binomial_count() {
        let m = DiscreteLogisticModel::default();
        assert_eq!(m.subsets().len(), 28);
        assert_eq!(m.conventional().subsets().len(), 1);
    }

    #[test]
    fn smallest_enumeration_has_four_outcomes_per_pair_code() {
        let m = DiscreteLogisticModel {
            input_design: vec![0.5],
            ..Default::default()
        };
        let out = m.enumerate_outcomes(0, 1, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert_eq!(out.len(), 4);
        let total: f64 = out.iter().map(|(_, p)| p).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn label_sequence_counts() {
        let single = DiscreteLogisticModel {
            input_design: vec![0.3],
            ..Default::default()
        };
        // m (N + 1) + 1 = 5 binary labels
        let out = single.enumerate_outcomes(1, 2, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert_eq!(out.len(), 1 << 5);
        let out = single.enumerate_outcomes(2, 2, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert_eq!(out.len(), 1 << 7);
        let out = DiscreteLogisticModel::default()
            .enumerate_outcomes(1, 2, DEFAULT_ENUMERATION_BUDGET)
            .unwrap();
        assert_eq!(out.len(), 1 << 10);
        let total: f64 = out.iter().map(|(_, p)| p).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn budget_overflow_is_a_capacity_error() {
        let err = DiscreteLogisticModel::default()
            .enumerate_outcomes(8, 4, DEFAULT_ENUMERATION_BUDGET)
            .unwrap_err();
        match err {
            Error::Capacity { required, allowed, .. } => {
                assert_eq!(allowed, DEFAULT_ENUMERATION_BUDGET);
                assert_eq!(required, 4u128.pow(37));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn uninformative_input_gives_exchangeable_labels() {
        let m = DiscreteLogisticModel {
            input_design: vec![0.0],
            ..Default::default()
        };
        let out = m.enumerate_outcomes(2, 2, DEFAULT_ENUMERATION_BUDGET).unwrap();
        let mut by_count: HashMap<usize, f64> = HashMap::new();
        for (seq, p) in &out {
            let ones = seq.iter().filter(|o| o.label == 1).count();
            let e = by_count.entry(ones).or_insert(*p);
            assert_abs_diff_eq!(*e, *p, epsilon = 1e-15);
        }
    }

    #[test]
    fn marginalizing_the_test_task_recovers_the_meta_training_marginal() {
        let m = DiscreteLogisticModel::default();
        let (n, mm) = (1, 2);
        let full = m.enumerate_outcomes(n, mm, DEFAULT_ENUMERATION_BUDGET).unwrap();
        let mut marg: HashMap<Vec<Outcome>, f64> = HashMap::new();
        for (seq, p) in &full {
            *marg.entry(seq[..n * mm].to_vec()).or_default() += p;
        }
        // independent route: meta-training-only joint by direct summation
        let subsets = m.subsets();
        for (seq, p) in &marg {
            let mut direct = 0.0;
            for s in &subsets {
                let mut task = 0.0;
                for &wi in s {
                    let w = m.candidate_grid[wi];
                    let mut lik = 1.0;
                    for o in seq {
                        let p1 = m.prob_one(m.input_design[o.x_index], w);
                        lik *= 0.5 * if o.label == 1 { p1 } else { 1.0 - p1 };
                    }
                    task += lik / s.len() as f64;
                }
                direct += task / subsets.len() as f64;
            }
            assert_abs_diff_eq!(*p, direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn sampled_params_belong_to_the_selected_subset() {
        let m = DiscreteLogisticModel::default();
        let mut rng = stream(1, &[0]);
        for _ in 0..200 {
            let u = m.sample_hyper(&mut rng);
            let w = m.sample_param(&u, &mut rng);
            assert!(u.contains(&w[0]));
            assert!(m.ln_prior(&w, &u).unwrap().is_finite());
        }
    }

    #[test]
    fn likelihood_gradient_matches_finite_differences() {
        let m = DiscreteLogisticModel::default();
        let mut rng = stream(2, &[0]);
        for _ in 0..200 {
            let w = rng.random_range(-2.0..2.0);
            let x = rng.random_range(-1.5..1.5);
            let y = if rng.random::<bool>() { 1.0 } else { 0.0 };
            let h = 1e-5;
            let fd = (m.ln_likelihood(y, x, &[w + h]).unwrap() - m.ln_likelihood(y, x, &[w - h]).unwrap())
                / (2.0 * h);
            let g = m.grad_w_ln_likelihood(y, x, &[w]).unwrap()[0];
            assert!((g - fd).abs() / g.abs().max(fd.abs()).max(1.0) < 1e-5);
        }
    }

    #[test]
    fn invalid_points_name_the_field() {
        let m = DiscreteLogisticModel::default();
        assert!(matches!(m.ln_prior(&[0.5], &[1.6, 1.2]), Err(Error::Domain { field: "w", .. })));
        assert!(matches!(m.ln_hyperprior(&[1.6, 1.6]), Err(Error::Domain { field: "u", .. })));
        assert!(matches!(m.ln_likelihood(0.5, 1.0, &[0.4]), Err(Error::Domain { field: "y", .. })));
        assert_eq!(m.ln_prior(&[0.4], &[1.6, 1.2]).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(m.grad_u_ln_prior(&[0.4], &[1.6, 1.2]), Err(Error::Capability(_))));
    }
}
