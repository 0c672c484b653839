//! Parameter initialization.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::numerics::Tensor;

/// Fan-in scaled Gaussian, `N(0, 2 / fan_in)`.
pub fn kaiming(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("finite samples")
}

/// Fan-in scaled Gaussian without the ReLU gain, `N(0, 1 / fan_in)`.
pub fn lecun(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    kaiming(shape, 2 * fan_in.max(1), rng)
}
