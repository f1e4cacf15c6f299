use crate::error::{Error, Result};
use crate::model::{HierarchicalModel, Sample};
use crate::scalar::Scalar;

/// `K` particles approximating one task's posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble<T> {
    pub particles: Vec<Vec<T>>,
    pub task_id: usize,
    /// Bandwidth used by the most recent update.
    pub kernel_bandwidth: T,
}

impl<T: Scalar> ParticleEnsemble<T> {
    pub fn new(particles: Vec<Vec<T>>, task_id: usize) -> Result<Self> {
        let dim = particles.first().map(Vec::len).unwrap_or(0);
        if particles.is_empty() || dim == 0 {
            return Err(Error::Argument("an ensemble needs at least one non-empty particle".into()));
        }
        for (k, p) in particles.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::Argument(format!("particle {k} has dimension {}, expected {dim}", p.len())));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("particle {k} of task {task_id} is not finite")));
            }
        }
        let mut e = Self {
            particles,
            task_id,
            kernel_bandwidth: T::one(),
        };
        e.kernel_bandwidth = e.median_bandwidth();
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles[0].len()
    }

    pub fn mean(&self) -> Vec<T> {
        let k = T::from_usize(self.len()).unwrap();
        (0..self.dim())
            .map(|j| self.particles.iter().map(|p| p[j]).sum::<T>() / k)
            .collect()
    }

    /// Per-coordinate variance with divisor `K`.
    pub fn variance(&self) -> Vec<T> {
        let k = T::from_usize(self.len()).unwrap();
        let mean = self.mean();
        (0..self.dim())
            .map(|j| self.particles.iter().map(|p| (p[j] - mean[j]).powi(2)).sum::<T>() / k)
            .collect()
    }

    /// `h = med² / ln(K + 1)` with `med` the median pairwise distance; `1`
    /// when there is a single particle or all particles coincide.
    pub fn median_bandwidth(&self) -> T {
        let k = self.len();
        if k < 2 {
            return T::one();
        }
        let mut d2: Vec<T> = Vec::with_capacity(k * (k - 1) / 2);
        for a in 0..k {
            for b in a + 1..k {
                d2.push(sq_dist(&self.particles[a], &self.particles[b]));
            }
        }
        d2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = d2.len();
        let med2 = if n % 2 == 1 {
            d2[n / 2]
        } else {
            // median of distances, squared
            let m = (d2[n / 2 - 1].sqrt() + d2[n / 2].sqrt()) / T::lit(2.0);
            m * m
        };
        if med2 > T::zero() {
            med2 / T::from_usize(k + 1).unwrap().ln()
        } else {
            T::one()
        }
    }

    /// One SVGD update given `∇ ln p` at every particle:
    /// `w_k += (ε/K) Σ_j [k(w_j, w_k) g_j + ∇_{w_j} k(w_j, w_k)]`,
    /// with `k(a, b) = exp(-‖a - b‖² / h)`.
    pub fn stein_update(&self, grads: &[Vec<T>], step: T) -> Result<Self> {
        if grads.len() != self.len() {
            return Err(Error::Argument("one gradient per particle required".into()));
        }
        let h = self.median_bandwidth();
        let k_count = T::from_usize(self.len()).unwrap();
        let two = T::lit(2.0);
        let mut out = self.particles.clone();
        for (k, wk) in self.particles.iter().enumerate() {
            let mut phi = vec![T::zero(); self.dim()];
            for (wj, gj) in self.particles.iter().zip(grads) {
                let kern = (-sq_dist(wj, wk) / h).exp();
                for d in 0..phi.len() {
                    phi[d] += kern * gj[d] - two * (wj[d] - wk[d]) / h * kern;
                }
            }
            for d in 0..phi.len() {
                out[k][d] += step / k_count * phi[d];
                if !out[k][d].is_finite() {
                    return Err(Error::Numeric(format!(
                        "SVGD produced a non-finite value for particle {k} of task {}",
                        self.task_id
                    )));
                }
            }
        }
        Ok(Self {
            particles: out,
            task_id: self.task_id,
            kernel_bandwidth: h,
        })
    }
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum()
}

/// Prior over a task's parameter used by the SVGD target.
#[derive(Debug, Clone, Copy)]
pub enum TaskPrior<'a> {
    /// `P_{W|U=u}`
    Conditional(&'a [f64]),
    /// The marginal `P_W` (conventional learning).
    Marginal,
}

/// `∇_w [ln P(w | prior) + ln P(Z | w)]` for every particle.
pub fn log_joint_grads(
    model: &dyn HierarchicalModel,
    ensemble: &ParticleEnsemble<f64>,
    data: &[Sample],
    prior: TaskPrior<'_>,
) -> Result<Vec<Vec<f64>>> {
    ensemble
        .particles
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let mut g = match prior {
                TaskPrior::Conditional(u) => model.grad_w_ln_prior(w, u)?,
                TaskPrior::Marginal => model.grad_w_ln_marginal_prior(w)?,
            };
            for s in data {
                for (a, b) in g.iter_mut().zip(model.grad_w_ln_likelihood(s.y, s.x, w)?) {
                    *a += b;
                }
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient at particle {k} of task {}",
                    ensemble.task_id
                )));
            }
            Ok(g)
        })
        .collect()
}

/// One SVGD step on `ln P(w, Z | u) = ln P_{W|U}(w | u) + ln P_{Z|W}(Z | w)`.
pub fn svgd_step(
    ensemble: &ParticleEnsemble<f64>,
    data: &[Sample],
    u: &[f64],
    model: &dyn HierarchicalModel,
    step: f64,
) -> Result<ParticleEnsemble<f64>> {
    svgd_step_with(ensemble, data, TaskPrior::Conditional(u), model, step)
}

pub fn svgd_step_with(
    ensemble: &ParticleEnsemble<f64>,
    data: &[Sample],
    prior: TaskPrior<'_>,
    model: &dyn HierarchicalModel,
    step: f64,
) -> Result<ParticleEnsemble<f64>> {
    let grads = log_joint_grads(model, ensemble, data, prior)?;
    ensemble.stein_update(&grads, step)
}
