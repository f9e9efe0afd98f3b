use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Tensor;

/// Normal draws with standard deviation `sqrt(2 / fan_in)`, where fan-in is
/// the product of every dimension after the first.
pub fn he_init<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let fan_in: usize = shape.iter().skip(1).product::<usize>().max(1);
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
    let data = (0..shape.iter().product::<usize>())
        .map(|_| normal.sample(rng))
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}
