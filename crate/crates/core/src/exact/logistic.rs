//! Exact entropies for [`DiscreteLogisticModel`] by sufficient-statistic
//! enumeration.
//!
//! Given `w`, the pairs of a task are i.i.d. over `2p` codes
//! (`p` design inputs × 2 labels), so a task's probability depends only on its
//! code-count vector ("class"). Given `u`, tasks are i.i.d. as well, so a set
//! of `N` exchangeable tasks is summarized by the multiset of their classes.
//! Entropies are sums over classes and multisets weighted by the number of
//! sequences each one stands for.

use super::{ExactOptions, Method, Quantity, RiskReport};
use crate::error::{Error, Result};
use crate::model::DiscreteLogisticModel;
use crate::numerics::{binary_entropy, xlogx, CompensatedSum};

struct TaskClasses {
    /// sequences per class: `size! / Π n_c!`
    mult: Vec<f64>,
    /// `P(one sequence of the class | u)` per subset
    per_hyper: Vec<Vec<f64>>,
    /// `P(one sequence of the class | w)` per grid value
    per_param: Vec<Vec<f64>>,
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() + 1 == parts {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in (0..=left).rev() {
            cur.push(k);
            rec(left - k, parts, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// All entropies needed for one `(N, m)` cell, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticEntropies {
    /// `H(Z_{1:N})`
    pub meta: f64,
    /// `H(Z_{1:N}, Z)`
    pub meta_and_test_train: f64,
    /// `H(Z_{1:N}, Z, X, Y)`
    pub meta_and_test_task: f64,
    /// `H(Z)`
    pub test_train: f64,
    /// `H(Z, X, Y)`
    pub test_task: f64,
    pub train_given_hyper: f64,
    pub train_given_param: f64,
    /// `H(Y | X, W)`
    pub label_given_param: f64,
    /// `H(X)` of the test input
    pub input: f64,
}

pub struct LogisticExact<'a> {
    model: &'a DiscreteLogisticModel,
    budget: u128,
}

impl<'a> LogisticExact<'a> {
    pub fn new(model: &'a DiscreteLogisticModel, opts: &ExactOptions) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            model,
            budget: opts.enumeration_budget as u128,
        })
    }

    fn codes(&self) -> usize {
        2 * self.model.input_design.len()
    }

    fn pair_prob(&self, w: f64, code: usize) -> f64 {
        let p_x = 1.0 / self.model.input_design.len() as f64;
        let p1 = self.model.prob_one(self.model.input_design[code / 2], w);
        p_x * if code % 2 == 1 { p1 } else { 1.0 - p1 }
    }

    fn param_weights(&self) -> Vec<f64> {
        let subsets = self.model.subsets();
        let mut pw = vec![0.0; self.model.candidate_grid.len()];
        let unit = 1.0 / (subsets.len() * self.model.subset_size) as f64;
        for s in &subsets {
            for &i in s {
                pw[i] += unit;
            }
        }
        pw
    }

    fn classes(&self, size: usize) -> TaskClasses {
        let comps = compositions(size, self.codes());
        let grid = &self.model.candidate_grid;
        let per_param: Vec<Vec<f64>> = grid
            .iter()
            .map(|&w| {
                let logs: Vec<f64> = (0..self.codes()).map(|c| self.pair_prob(w, c).ln()).collect();
                comps
                    .iter()
                    .map(|n| {
                        n.iter()
                            .zip(&logs)
                            .map(|(&k, &l)| if k == 0 { 0.0 } else { k as f64 * l })
                            .sum::<f64>()
                            .exp()
                    })
                    .collect()
            })
            .collect();
        let d = self.model.subset_size as f64;
        let per_hyper = self
            .model
            .subsets()
            .iter()
            .map(|s| {
                (0..comps.len())
                    .map(|c| s.iter().map(|&wi| per_param[wi][c]).sum::<f64>() / d)
                    .collect()
            })
            .collect();
        let mult = comps
            .iter()
            .map(|n| (ln_factorial(size) - n.iter().map(|&k| ln_factorial(k)).sum::<f64>()).exp().round())
            .collect();
        TaskClasses {
            mult,
            per_hyper,
            per_param,
        }
    }

    fn n_classes(&self, size: usize) -> u128 {
        let parts = self.codes() as u128;
        binomial(size as u128 + parts - 1, parts - 1)
    }

    /// Joint entropy of `n` exchangeable tasks of size `m`, plus (optionally)
    /// one more task of size `extra` drawn under the same hyperparameter.
    pub fn collection_entropy(&self, n: usize, m: usize, extra: Option<usize>) -> Result<f64> {
        let s = self.n_classes(m);
        let multisets = binomial(s + n as u128 - 1, n as u128);
        let required = multisets.saturating_mul(extra.map_or(1, |e| self.n_classes(e)));
        if required > self.budget {
            return Err(Error::Capacity {
                what: "sufficient-statistic enumeration",
                required,
                allowed: self.budget,
            });
        }
        let base = self.classes(m);
        let ext = extra.map(|e| self.classes(e));
        let n_hyper = base.per_hyper.len();

        struct Walk<'b> {
            base: &'b TaskClasses,
            ext: Option<&'b TaskClasses>,
            n: usize,
            n_hyper: usize,
            acc: CompensatedSum<f64>,
        }

        impl Walk<'_> {
            fn leaf(&mut self, lik: &[f64], count: f64) {
                let inv = 1.0 / self.n_hyper as f64;
                match self.ext {
                    None => {
                        let p = lik.iter().sum::<f64>() * inv;
                        self.acc.add(-count * xlogx(p));
                    }
                    Some(ext) => {
                        for c in 0..ext.mult.len() {
                            let p = lik
                                .iter()
                                .zip(&ext.per_hyper)
                                .map(|(l, q)| l * q[c])
                                .sum::<f64>()
                                * inv;
                            self.acc.add(-count * ext.mult[c] * xlogx(p));
                        }
                    }
                }
            }

            // choose the `depth`-th task class, classes non-decreasing
            fn rec(&mut self, depth: usize, start: usize, run: usize, lik: &[f64], count: f64) {
                if depth == self.n {
                    self.leaf(lik, count);
                    return;
                }
                let mut next = vec![0.0; lik.len()];
                for c in start..self.base.mult.len() {
                    let r = if c == start && depth > 0 { run + 1 } else { 1 };
                    for (u, nv) in next.iter_mut().enumerate() {
                        *nv = lik[u] * self.base.per_hyper[u][c];
                    }
                    let cnt = count * self.base.mult[c] * (depth + 1) as f64 / r as f64;
                    self.rec(depth + 1, c, r, &next, cnt);
                }
            }
        }

        let mut walk = Walk {
            base: &base,
            ext: ext.as_ref(),
            n,
            n_hyper,
            acc: CompensatedSum::new(),
        };
        walk.rec(0, 0, 0, &vec![1.0; n_hyper], 1.0);
        Ok(walk.acc.value())
    }

    pub fn entropies(&self, n: usize, m: usize) -> Result<LogisticEntropies> {
        if m == 0 {
            return Err(Error::Argument("m must be at least 1".into()));
        }
        let single = self.classes(m);
        let n_hyper = single.per_hyper.len() as f64;
        let pw = self.param_weights();

        let train_given_hyper = single
            .per_hyper
            .iter()
            .map(|q| -q.iter().zip(&single.mult).map(|(&p, &k)| k * xlogx(p)).sum::<f64>())
            .sum::<f64>()
            / n_hyper;
        let train_given_param = single
            .per_param
            .iter()
            .zip(&pw)
            .map(|(g, &p)| p * -g.iter().zip(&single.mult).map(|(&q, &k)| k * xlogx(q)).sum::<f64>())
            .sum();
        let design = &self.model.input_design;
        let label_given_param = self
            .model
            .candidate_grid
            .iter()
            .zip(&pw)
            .map(|(&w, &p)| {
                p * design
                    .iter()
                    .map(|&x| binary_entropy(self.model.prob_one(x, w)))
                    .sum::<f64>()
                    / design.len() as f64
            })
            .sum();

        Ok(LogisticEntropies {
            meta: self.collection_entropy(n, m, None)?,
            meta_and_test_train: self.collection_entropy(n, m, Some(m))?,
            meta_and_test_task: self.collection_entropy(n, m, Some(m + 1))?,
            test_train: self.collection_entropy(0, m, Some(m))?,
            test_task: self.collection_entropy(0, m, Some(m + 1))?,
            train_given_hyper,
            train_given_param,
            label_given_param,
            input: (design.len() as f64).ln(),
        })
    }

    fn report(&self, quantity: Quantity, value: f64, n: usize, m: usize) -> RiskReport {
        RiskReport {
            quantity,
            value,
            std_error: 0.0,
            n_tasks: n,
            m,
            method: Method::Enumeration,
        }
    }

    /// Every [`Quantity`] for the cell `(N, m)`.
    pub fn all(&self, n: usize, m: usize) -> Result<Vec<RiskReport>> {
        let h = self.entropies(n, m)?;
        let mer = self.mer(m)?.value;
        let bayes = h.meta_and_test_task - h.meta_and_test_train - h.input;
        let values = [
            (Quantity::BayesRisk, bayes),
            (Quantity::GenieRisk, h.label_given_param),
            (Quantity::Mer, mer),
            (Quantity::Memr, bayes - h.label_given_param),
            (
                Quantity::MetaGain,
                h.meta_and_test_train + h.test_task - h.meta_and_test_task - h.test_train,
            ),
            (Quantity::MiHyperMeta, h.meta - n as f64 * h.train_given_hyper),
            (Quantity::MiParamGivenHyper, h.train_given_hyper - h.train_given_param),
            (
                Quantity::MiParamGivenMetadata,
                h.meta_and_test_train - h.meta - h.train_given_param,
            ),
            (Quantity::MiParamData, h.test_train - h.train_given_param),
        ];
        Ok(values
            .into_iter()
            .map(|(q, v)| self.report(q, v, n, m))
            .collect())
    }

    pub fn quantity(&self, q: Quantity, n: usize, m: usize) -> Result<RiskReport> {
        if q == Quantity::Mer {
            return self.mer(m);
        }
        Ok(*self
            .all(n, m)?
            .iter()
            .find(|r| r.quantity == q)
            .expect("all quantities reported"))
    }

    /// Conventional learning: the prior is the marginal `P_W` and no
    /// meta-training data is seen. Computed on the single-hyperparameter view
    /// of the model.
    pub fn mer(&self, m: usize) -> Result<RiskReport> {
        let conv = self.model.conventional();
        let engine = LogisticExact {
            model: &conv,
            budget: self.budget,
        };
        let test_task = engine.collection_entropy(0, m, Some(m + 1))?;
        let test_train = engine.collection_entropy(0, m, Some(m))?;
        let genie = engine.entropies(0, 1)?.label_given_param;
        let input = (self.model.input_design.len() as f64).ln();
        Ok(self.report(Quantity::Mer, test_task - test_train - input - genie, 0, m))
    }
}
