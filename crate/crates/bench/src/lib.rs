//! Shared fixtures for the criterion benches.

use tnt_core::experiments::{gen_vector, Distribution};
use tnt_core::fixtures::gaussian_tensor;
use tnt_core::WeightTensor;

pub fn uniform_vector(n: usize, seed: u64) -> Vec<f64> {
    gen_vector(Distribution::UniformSymmetric, n, seed)
}

pub fn normal_vector(n: usize, seed: u64) -> Vec<f64> {
    gen_vector(Distribution::StandardNormal, n, seed)
}

/// A dense layer of `rows` output neurons with `cols` inputs.
pub fn dense_layer(rows: usize, cols: usize, seed: u64) -> WeightTensor {
    gaussian_tensor("dense", 0, &[rows, cols], seed)
}
