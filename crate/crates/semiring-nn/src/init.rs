//! Parameter initialization.
//!
//! Linear layers use standard fan-in scaled schemes (Kaiming, Xavier).
//! Semiring layers use *fair* initialization: each row gets a single
//! near-zero entry cycling across columns while every other entry is pushed
//! down (max-plus) or up (min-plus) by a penalty `K`, plus uniform jitter.
//! With inputs in `[-K/2, K/2]` every input column then wins an even share
//! of the rows, which keeps the routed gradients balanced from the start.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    FairTropical,
    Kaiming,
    Xavier,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub scheme: InitScheme,
    /// Penalty magnitude applied off the fair diagonal.
    pub k: f64,
    /// Uniform jitter half-width, on the order of `k/2`.
    pub epsilon: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self { scheme: InitScheme::FairTropical, k: 1.0, epsilon: 0.5 }
    }
}

impl InitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k <= 0.0 || !self.k.is_finite() {
            return Err(Error::ModelConfig(format!(
                "fair init penalty K must be positive, got {}",
                self.k
            )));
        }
        if self.epsilon < 0.0 || !self.epsilon.is_finite() {
            return Err(Error::ModelConfig(format!(
                "fair init jitter epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TropicalVariant {
    MaxPlus,
    MinPlus,
}

fn fair_matrix<T: Scalar>(
    n: usize,
    m: usize,
    penalty: f64,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Tensor<T> {
    let mut data = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let jitter = rng.random_range(-epsilon..=epsilon);
            let base = if i % m == j { 0.0 } else { penalty };
            data.push(T::from_f64(base + jitter));
        }
    }
    Tensor::new(vec![n, m], data).expect("sized by construction")
}

/// Fair initialization for tropical operators: `w_ij = Unif[-ε,ε] + (0 if
/// i ≡ j mod m, else ∓K)` with `-K` for max-plus and `+K` for min-plus.
pub fn fair_tropical_init<T: Scalar>(
    n: usize,
    m: usize,
    spec: &InitSpec,
    variant: TropicalVariant,
    rng: &mut impl Rng,
) -> Result<Tensor<T>> {
    spec.validate()?;
    let penalty = match variant {
        TropicalVariant::MaxPlus => -spec.k,
        TropicalVariant::MinPlus => spec.k,
    };
    Ok(fair_matrix(n, m, penalty, spec.epsilon, rng))
}

/// Fair initialization for logarithmic operators: the same pattern with an
/// effective penalty `-sign(μ)·|K|`, so μ > 0 matches the max-plus pattern
/// and μ < 0 the min-plus pattern.
pub fn fair_log_init<T: Scalar>(
    n: usize,
    m: usize,
    spec: &InitSpec,
    mu: f64,
    rng: &mut impl Rng,
) -> Result<Tensor<T>> {
    spec.validate()?;
    if mu == 0.0 {
        return Err(Error::InvalidSemiring("fair log init needs mu != 0".into()));
    }
    let penalty = -mu.signum() * spec.k.abs();
    Ok(fair_matrix(n, m, penalty, spec.epsilon, rng))
}

/// Zero-mean entries with variance `2 / fan_in`.
pub fn kaiming_init<T: Scalar>(n: usize, m: usize, rng: &mut impl Rng) -> Tensor<T> {
    kaiming_shaped(vec![n, m], m, rng)
}

/// Kaiming draw for an arbitrary shape with an explicit fan-in.
pub fn kaiming_shaped<T: Scalar>(
    shape: Vec<usize>,
    fan_in: usize,
    rng: &mut impl Rng,
) -> Tensor<T> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid sd");
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| T::from_f64(normal.sample(rng))).collect();
    Tensor::new(shape, data).expect("sized by construction")
}

/// Glorot uniform: `Unif[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_init<T: Scalar>(n: usize, m: usize, rng: &mut impl Rng) -> Tensor<T> {
    let a = (6.0 / (n + m) as f64).sqrt();
    let data = (0..n * m)
        .map(|_| T::from_f64(rng.random_range(-a..=a)))
        .collect();
    Tensor::new(vec![n, m], data).expect("sized by construction")
}
