use alloc::vec;

use rand::Rng;

use crate::math;
use crate::tensor::Tensor;

/// Glorot-uniform `fan_in × fan_out` matrix.
pub fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let a = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("positive dims")
}

pub fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, a: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect();
    Tensor::new(vec![rows, cols], data).expect("positive dims")
}

pub fn zeros(rows: usize, cols: usize) -> Tensor {
    Tensor::zeros(&[rows, cols])
}
