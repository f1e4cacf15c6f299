//! Small numeric kernels: compensated summation, log-sum-exp, entropies and
//! quadrature helpers.

use crate::scalar::Scalar;

/// Neumaier compensated accumulator. Summing the same sequence always gives
/// the same bits, and the error does not grow with the number of terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Scalar> CompensatedSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            carry: T::zero(),
        }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.carry
    }
}

pub fn compensated_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// `ln Σ exp(x_i)`; `-inf` for an empty slice.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let s = compensated_sum(xs.iter().map(|&x| (x - max).exp()));
    max + s.ln()
}

/// `x ln x` with the continuous extension `0 ln 0 = 0`.
#[inline]
pub fn xlogx<T: Scalar>(x: T) -> T {
    if x <= T::zero() {
        T::zero()
    } else {
        x * x.ln()
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln σ(z)` without overflow.
#[inline]
pub fn ln_sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Binary entropy in nats.
pub fn binary_entropy<T: Scalar>(p: T) -> T {
    -(xlogx(p) + xlogx(T::one() - p))
}

/// Shannon entropy (nats) of a probability vector.
pub fn entropy<T: Scalar>(probs: &[T]) -> T {
    -compensated_sum(probs.iter().map(|&p| xlogx(p)))
}

pub fn linspace<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![(lo + hi) / T::lit(2.0)],
        _ => {
            let step = (hi - lo) / T::from_usize(n - 1).unwrap();
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        lo + step * T::from_usize(i).unwrap()
                    }
                })
                .collect()
        }
    }
}

pub fn logspace<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    linspace(lo.ln(), hi.ln(), n)
        .into_iter()
        .map(T::exp)
        .collect()
}

/// Trapezoid weights for an increasing (not necessarily uniform) grid, so that
/// `Σ w_i f(x_i) ≈ ∫ f`.
pub fn trapezoid_weights<T: Scalar>(xs: &[T]) -> Vec<T> {
    let n = xs.len();
    let mut w = vec![T::zero(); n];
    let half = T::lit(0.5);
    for i in 1..n {
        let h = xs[i] - xs[i - 1];
        w[i - 1] += half * h;
        w[i] += half * h;
    }
    w
}

pub fn trapezoid<T: Scalar>(xs: &[T], ys: &[T]) -> T {
    assert_eq!(xs.len(), ys.len());
    compensated_sum(
        trapezoid_weights(xs)
            .into_iter()
            .zip(ys)
            .map(|(w, &y)| w * y),
    )
}

/// Composite Simpson rule on `n` (rounded up to even) panels.
pub fn simpson<T: Scalar>(f: impl Fn(T) -> T, lo: T, hi: T, n: usize) -> T {
    let n = n.max(2) + n % 2;
    let h = (hi - lo) / T::from_usize(n).unwrap();
    let mut acc = CompensatedSum::new();
    acc.add(f(lo));
    acc.add(f(hi));
    for i in 1..n {
        let x = lo + h * T::from_usize(i).unwrap();
        let c = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
        acc.add(c * f(x));
    }
    acc.value() * h / T::lit(3.0)
}

/// Double-exponential (tanh-sinh) quadrature of `f` on `[a, b]` with step `h`
/// in the transformed variable and `|t| <= t_max`. Handles integrands that
/// concentrate at the endpoints; the endpoint distance is computed without
/// cancellation.
pub fn tanh_sinh<T: Scalar>(f: impl Fn(T) -> T, a: T, b: T, h: T, t_max: T) -> T {
    let half = (b - a) / T::lit(2.0);
    let mid = (a + b) / T::lit(2.0);
    let pi2 = T::FRAC_PI_2();
    let n = (t_max / h).ceil().to_usize().unwrap_or(0);
    let mut acc = CompensatedSum::new();
    acc.add(pi2 * f(mid));
    for k in 1..=n {
        let t = h * T::from_usize(k).unwrap();
        let s = pi2 * t.sinh();
        let weight = pi2 * t.cosh() / (s.cosh() * s.cosh());
        // distance of the node from the nearer endpoint, in units of `half`
        let gap = T::lit(2.0) / (T::one() + (T::lit(2.0) * s).exp());
        if gap <= T::zero() {
            break;
        }
        acc.add(weight * (f(b - half * gap) + f(a + half * gap)));
    }
    acc.value() * h * half
}

/// Sample mean and the standard error of the mean (`sd / √n`).
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    let sd = (ss / (n - 1) as f64).sqrt();
    (mean, sd / (n as f64).sqrt())
}

/// Standard error of the mean of an autocorrelated series by non-overlapping
/// batch means.
pub fn batch_means_std_error(values: &[f64], batches: usize) -> f64 {
    let batches = batches.max(2).min(values.len());
    let size = values.len() / batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| compensated_sum(values[b * size..(b + 1) * size].iter().copied()) / size as f64)
        .collect();
    mean_and_std_error(&means).1
}
