use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ln_sigmoid, sigmoid};
use crate::scalar::Scalar;

/// Optimizer and schedule of the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig<T> {
    pub step_size: T,
    pub adam_beta1: T,
    pub adam_beta2: T,
    pub adam_eps: T,
    /// Weight of the `½ ‖W‖²` penalty on the weight matrices.
    pub l2: T,
    pub batch: usize,
    /// Number of mini-batch updates.
    pub epochs: usize,
    /// Training-curve sampling period, in updates.
    pub log_every: usize,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            step_size: T::lit(1e-3),
            adam_beta1: T::lit(0.9),
            adam_beta2: T::lit(0.999),
            adam_eps: T::lit(1e-8),
            l2: T::lit(1e-3),
            batch: 64,
            epochs: 2000,
            log_every: 100,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: T| b > T::zero() && b < T::one();
        if !(self.step_size > T::zero()) || !(self.l2 >= T::zero()) || !(self.adam_eps > T::zero()) {
            return Err(Error::Argument("step_size and adam_eps must be positive, l2 non-negative".into()));
        }
        if !unit(self.adam_beta1) || !unit(self.adam_beta2) {
            return Err(Error::Argument("Adam betas must lie in (0, 1)".into()));
        }
        if self.batch == 0 || self.epochs == 0 || self.log_every == 0 {
            return Err(Error::Argument("batch, epochs and log_every must be positive".into()));
        }
        Ok(())
    }
}

/// Fully connected network, ReLU hidden layers, one sigmoid output.
/// Weights are row-major `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier<T> {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

/// Gradients with the same layout as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Scalar> MlpClassifier<T> {
    /// Uniform `(-1/√fan_in, 1/√fan_in)` initialization.
    pub fn new(layer_sizes: &[usize], rng: &mut dyn RngCore) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) || *layer_sizes.last().unwrap() != 1 {
            return Err(Error::Argument(format!(
                "layer sizes {layer_sizes:?} must be positive and end in a single output"
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let a = 1.0 / (fan_in as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| T::lit(rng.random_range(-a..a))).collect());
            biases.push((0..fan_out).map(|_| T::lit(rng.random_range(-a..a))).collect());
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[T]) {
        let mut i = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&flat[i..i + nw]);
            i += nw;
            b.copy_from_slice(&flat[i..i + nb]);
            i += nb;
        }
    }

    /// Activations of every layer for one input; the last holds the logit.
    fn activations(&self, x: &[T]) -> Vec<Vec<T>> {
        let mut acts = vec![x.to_vec()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = &acts[l];
            let fan_in = input.len();
            let out: Vec<T> = b
                .iter()
                .enumerate()
                .map(|(o, &bias)| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    let z = row.iter().zip(input).fold(bias, |acc, (&a, &v)| acc + a * v);
                    if l < last {
                        z.max(T::zero())
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn logit(&self, x: &[T]) -> T {
        self.activations(x).last().unwrap()[0]
    }

    /// `P(joint | x)`
    pub fn predict(&self, x: &[T]) -> T {
        sigmoid(self.logit(x))
    }

    /// Mean binary cross-entropy over the batch plus `(l2/2) Σ ‖W‖²`.
    pub fn loss(&self, xs: &[&[T]], labels: &[T], l2: T) -> T {
        let n = T::from_usize(xs.len()).unwrap();
        let data: T = xs
            .iter()
            .zip(labels)
            .map(|(x, &y)| {
                let z = self.logit(x);
                -(y * ln_sigmoid(z) + (T::one() - y) * ln_sigmoid(-z))
            })
            .sum::<T>()
            / n;
        data + self.penalty(l2)
    }

    fn penalty(&self, l2: T) -> T {
        let sq: T = self.weights.iter().flatten().map(|&w| w * w).sum();
        T::lit(0.5) * l2 * sq
    }

    /// Loss and its gradient by backpropagation.
    pub fn loss_and_grad(&self, xs: &[&[T]], labels: &[T], l2: T) -> (T, Gradients<T>) {
        let n = T::from_usize(xs.len()).unwrap();
        let mut gw: Vec<Vec<T>> = self.weights.iter().map(|w| vec![T::zero(); w.len()]).collect();
        let mut gb: Vec<Vec<T>> = self.biases.iter().map(|b| vec![T::zero(); b.len()]).collect();
        let mut total = T::zero();
        let layers = self.weights.len();
        for (x, &y) in xs.iter().zip(labels) {
            let acts = self.activations(x);
            let z = acts[layers][0];
            total += -(y * ln_sigmoid(z) + (T::one() - y) * ln_sigmoid(-z));
            // d loss / d logit
            let mut delta = vec![(sigmoid(z) - y) / n];
            for l in (0..layers).rev() {
                let input = &acts[l];
                let fan_in = input.len();
                for (o, &d) in delta.iter().enumerate() {
                    gb[l][o] += d;
                    let row = &mut gw[l][o * fan_in..(o + 1) * fan_in];
                    for (g, &v) in row.iter_mut().zip(input) {
                        *g += d * v;
                    }
                }
                if l > 0 {
                    let w = &self.weights[l];
                    let mut next = vec![T::zero(); fan_in];
                    for (o, &d) in delta.iter().enumerate() {
                        let row = &w[o * fan_in..(o + 1) * fan_in];
                        for (nx, &a) in next.iter_mut().zip(row) {
                            *nx += d * a;
                        }
                    }
                    // ReLU derivative; the activation of layer l is its output
                    for (nx, &a) in next.iter_mut().zip(input) {
                        if a <= T::zero() {
                            *nx = T::zero();
                        }
                    }
                    delta = next;
                }
            }
        }
        for (g, w) in gw.iter_mut().zip(&self.weights) {
            for (gi, &wi) in g.iter_mut().zip(w) {
                *gi += l2 * wi;
            }
        }
        (
            total / n + self.penalty(l2),
            Gradients {
                weights: gw,
                biases: gb,
            },
        )
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n_params: usize, config: &TrainConfig<T>) -> Self {
        Self {
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            t: 0,
            lr: config.step_size,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
        }
    }

    /// Updates `params` in place from `grad`.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let c1 = T::one() - self.beta1.powi(self.t);
        let c2 = T::one() - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn flatten<T: Scalar>(g: &Gradients<T>) -> Vec<T> {
    let mut out = Vec::new();
    for (w, b) in g.weights.iter().zip(&g.biases) {
        out.extend_from_slice(w);
        out.extend_from_slice(b);
    }
    out
}

/// Rows with binary labels (`1` = joint, `0` = product).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    pub features: Vec<Vec<T>>,
    pub labels: Vec<u8>,
}

impl<T: Scalar> LabeledSet<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.first().map(Vec::len).unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if self.is_empty() || self.features.len() != self.labels.len() {
            return Err(Error::Argument("training set must be non-empty with one label per row".into()));
        }
        let width = self.width();
        for (i, row) in self.features.iter().enumerate() {
            if row.len() != width || row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Argument(format!("feature row {i} is malformed or not finite")));
            }
        }
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        if 2 * ones != self.len() || self.labels.iter().any(|&l| l > 1) {
            return Err(Error::Argument("labels must be balanced between joint (1) and product (0)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Trains a fresh classifier with the given hidden widths.
pub fn mlp_train<T: Scalar>(
    data: &LabeledSet<T>,
    hidden: &[usize],
    config: &TrainConfig<T>,
    rng: &mut dyn RngCore,
) -> Result<(MlpClassifier<T>, Vec<CurvePoint>)> {
    config.validate()?;
    data.validate()?;
    let mut sizes = vec![data.width()];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    let mut net = MlpClassifier::new(&sizes, rng)?;
    let mut adam = Adam::new(net.n_params(), config);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut cursor = 0;
    let mut curve = Vec::new();
    let batch = config.batch.min(data.len());
    for epoch in 0..config.epochs {
        if cursor + batch > order.len() {
            order.shuffle(rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + batch];
        cursor += batch;
        let xs: Vec<&[T]> = idx.iter().map(|&i| data.features[i].as_slice()).collect();
        let ys: Vec<T> = idx.iter().map(|&i| T::from_u8(data.labels[i]).unwrap()).collect();
        let (loss, grad) = net.loss_and_grad(&xs, &ys, config.l2);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("training loss at batch {epoch}")));
        }
        let mut params = net.params();
        adam.step(&mut params, &flatten(&grad));
        net.set_params(&params);
        if epoch % config.log_every == 0 || epoch + 1 == config.epochs {
            let correct = xs
                .iter()
                .zip(&ys)
                .filter(|(x, &y)| (net.predict(x) > T::lit(0.5)) == (y > T::lit(0.5)))
                .count();
            curve.push(CurvePoint {
                epoch,
                loss: loss.to_f64_lossy(),
                accuracy: correct as f64 / xs.len() as f64,
            });
        }
    }
    Ok((net, curve))
}

/// Writes `epoch,loss,accuracy` rows.
pub fn write_training_curve(curve: &[CurvePoint], mut out: impl Write) -> Result<()> {
    writeln!(out, "epoch,loss,accuracy")?;
    for p in curve {
        writeln!(out, "{},{:e},{:e}", p.epoch, p.loss, p.accuracy)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn backprop_matches_central_differences() {
        let mut rng = stream(1, &[]);
        let mut worst: f64 = 0.0;
        for trial in 0..10 {
            // [1, 3, 1] has 10 parameters
            let net = MlpClassifier::<f64>::new(&[1, 3, 1], &mut rng).unwrap();
            assert_eq!(net.n_params(), 10);
            let xs: Vec<Vec<f64>> = (0..8).map(|_| vec![StandardNormal.sample(&mut rng)]).collect();
            let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
            let ys: Vec<f64> = (0..8).map(|i| ((i + trial) % 2) as f64).collect();
            let (_, g) = net.loss_and_grad(&refs, &ys, 1e-3);
            let g = flatten(&g);
            let p0 = net.params();
            for i in 0..p0.len() {
                let h = 1e-6;
                let mut a = net.clone();
                let mut p = p0.clone();
                p[i] += h;
                a.set_params(&p);
                let up = a.loss(&refs, &ys, 1e-3);
                p[i] -= 2.0 * h;
                a.set_params(&p);
                let down = a.loss(&refs, &ys, 1e-3);
                let fd = (up - down) / (2.0 * h);
                let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn adam_ignores_zero_gradients_and_descends_constant_ones() {
        let config = TrainConfig::<f64>::default();
        let mut adam = Adam::new(3, &config);
        let mut p = vec![0.5, -0.2, 1.0];
        adam.step(&mut p, &[0.0, 0.0, 0.0]);
        assert_eq!(p, vec![0.5, -0.2, 1.0]);
        let mut adam = Adam::new(3, &config);
        let g = [2.0, -0.5, 1e-3];
        let start = p.clone();
        for _ in 0..100 {
            adam.step(&mut p, &g);
        }
        for i in 0..3 {
            assert_eq!((p[i] - start[i]).signum(), -g[i].signum());
        }
    }

    fn toy(rng: &mut dyn RngCore, n: usize, joint: impl Fn(&mut dyn RngCore) -> f64, product: impl Fn(&mut dyn RngCore) -> f64) -> LabeledSet<f64> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            features.push(vec![joint(rng)]);
            labels.push(1);
            features.push(vec![product(rng)]);
            labels.push(0);
        }
        LabeledSet { features, labels }
    }

    #[test]
    fn separable_classes_are_learned() {
        let mut rng = stream(2, &[]);
        let data = toy(&mut rng, 500, |_| 1.0, |_| -1.0);
        let (net, curve) = mlp_train(&data, &[64, 64], &TrainConfig::default(), &mut rng).unwrap();
        assert!(net.predict(&[1.0]) > 0.5 && net.predict(&[-1.0]) < 0.5);
        let held = toy(&mut rng, 200, |_| 1.0, |_| -1.0);
        let acc = held
            .features
            .iter()
            .zip(&held.labels)
            .filter(|(x, &l)| (net.predict(x) > 0.5) == (l == 1))
            .count() as f64
            / held.len() as f64;
        assert!(acc >= 0.99);
        assert!(!curve.is_empty());
    }

    #[test]
    fn indistinguishable_classes_give_one_half() {
        let mut rng = stream(3, &[]);
        let draw = |r: &mut dyn RngCore| -> f64 { StandardNormal.sample(r) };
        let data = toy(&mut rng, 2000, draw, draw);
        let (net, _) = mlp_train(&data, &[64, 64], &TrainConfig::default(), &mut rng).unwrap();
        for _ in 0..50 {
            let x: f64 = StandardNormal.sample(&mut rng);
            assert!((net.predict(&[x]) - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn single_precision_network_trains() {
        let mut rng = stream(4, &[]);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            features.push(vec![if i % 2 == 0 { 1.0f32 } else { -1.0 }]);
            labels.push(if i % 2 == 0 { 1 } else { 0 });
        }
        let data = LabeledSet { features, labels };
        let (net, _) = mlp_train::<f32>(&data, &[8], &TrainConfig::default(), &mut rng).unwrap();
        assert!(net.predict(&[1.0]) > 0.5);
    }

    #[test]
    fn unbalanced_or_non_finite_data_is_rejected() {
        let mut rng = stream(5, &[]);
        let bad = LabeledSet {
            features: vec![vec![0.0], vec![1.0], vec![2.0]],
            labels: vec![1, 1, 0],
        };
        assert!(mlp_train(&bad, &[4], &TrainConfig::default(), &mut rng).is_err());
        let nan = LabeledSet {
            features: vec![vec![f64::NAN], vec![1.0]],
            labels: vec![1, 0],
        };
        assert!(mlp_train(&nan, &[4], &TrainConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn divergent_training_reports_the_batch() {
        let mut rng = stream(6, &[]);
        let data = LabeledSet {
            features: vec![vec![1e300], vec![-1e300]],
            labels: vec![1, 0],
        };
        let config = TrainConfig {
            step_size: 1e300,
            ..TrainConfig::default()
        };
        match mlp_train(&data, &[4], &config, &mut rng) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("batch")),
            other => panic!("expected a numeric error, got {other:?}"),
        }
    }
}
