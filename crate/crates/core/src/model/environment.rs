use super::{Dataset, HierarchicalModel, Sample};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// One joint draw `(u, w_{1:N}, Z_{1:N}, w, Z, (x, y))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentDraw {
    pub u: Vec<f64>,
    pub meta_params: Vec<Vec<f64>>,
    pub meta_data: Vec<Dataset>,
    pub test_param: Vec<f64>,
    pub test_train: Dataset,
    pub test_point: Sample,
}

impl EnvironmentDraw {
    pub fn n_tasks(&self) -> usize {
        self.meta_data.len()
    }
}

/// Draws an environment from the hierarchical joint with a seed.
pub fn sample_environment<M: HierarchicalModel + ?Sized>(
    model: &M,
    n_tasks: usize,
    m: usize,
    seed: u64,
) -> Result<EnvironmentDraw> {
    sample_environment_with(model, n_tasks, m, seed, &[])
}

/// As [`sample_environment`], with the streams rooted at `path`.
///
/// Meta-training task `i` always comes from the same stream, so draws with
/// `N` and `N' > N` tasks share their first `N` tasks and the meta-test task.
pub fn sample_environment_with<M: HierarchicalModel + ?Sized>(
    model: &M,
    n_tasks: usize,
    m: usize,
    seed: u64,
    path: &[u64],
) -> Result<EnvironmentDraw> {
    if m == 0 {
        return Err(Error::Argument("per-task sample count m must be at least 1".into()));
    }
    let sub = |purpose: Purpose, idx: u64| {
        let mut p = path.to_vec();
        p.extend_from_slice(&[purpose as u64, idx]);
        stream(seed, &p)
    };
    let mut rng = sub(Purpose::Environment, 0);
    let u = model.sample_hyper(&mut rng);

    let mut meta_params = Vec::with_capacity(n_tasks);
    let mut meta_data = Vec::with_capacity(n_tasks);
    for i in 0..n_tasks {
        let mut rng = sub(Purpose::MetaTask, i as u64);
        let w = model.sample_param(&u, &mut rng);
        meta_data.push(model.sample_dataset(&w, m, &mut rng));
        meta_params.push(w);
    }

    let mut rng = sub(Purpose::MetaTest, 0);
    let test_param = model.sample_param(&u, &mut rng);
    let test_train = model.sample_dataset(&test_param, m, &mut rng);
    let mut point = model.sample_dataset(&test_param, 1, &mut rng);
    Ok(EnvironmentDraw {
        u,
        meta_params,
        meta_data,
        test_param,
        test_train,
        test_point: point.pop().expect("one pair"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiscreteLogisticModel, SinusoidModel};

    #[test]
    fn sinusoid_draw_has_declared_shape() {
        let d = sample_environment(&SinusoidModel::default(), 4, 2, 7).unwrap();
        assert_eq!(d.meta_data.len(), 4);
        assert!(d.meta_data.iter().all(|z| z.len() == 2));
        assert_eq!(d.test_train.len(), 2);
        assert!(d.u[0] > 0.0);
        assert!(d.meta_params.iter().all(|w| w[0].is_finite()));
    }

    #[test]
    fn zero_tasks_is_conventional_learning() {
        let d = sample_environment(&SinusoidModel::default(), 0, 1, 0).unwrap();
        assert!(d.meta_data.is_empty());
        assert_eq!(d.test_train.len(), 1);
    }

    #[test]
    fn logistic_params_lie_in_the_selected_subset() {
        let d = sample_environment(&DiscreteLogisticModel::default(), 2, 2, 1).unwrap();
        for w in d.meta_params.iter().chain(std::iter::once(&d.test_param)) {
            assert!(d.u.contains(&w[0]));
        }
        for s in d.meta_data.iter().flatten() {
            assert!(s.y == 0.0 || s.y == 1.0);
        }
    }

    #[test]
    fn draws_are_deterministic_and_nested_in_n() {
        let m = SinusoidModel::default();
        let a = sample_environment(&m, 3, 2, 11).unwrap();
        let b = sample_environment(&m, 3, 2, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_environment(&m, 5, 2, 11).unwrap();
        assert_eq!(&c.meta_data[..3], &a.meta_data[..]);
        assert_eq!(c.test_point, a.test_point);
    }

    #[test]
    fn zero_m_is_rejected() {
        assert!(matches!(
            sample_environment(&SinusoidModel::default(), 1, 0, 0),
            Err(Error::Argument(_))
        ));
    }
}
