//! Synthetic Gaussian-initialized models for demos, tests, and benchmarks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Dtype, TensorShape, WeightTensor};

/// A standard-normal tensor with a per-(seed, index) ChaCha8 stream. Values
/// are rounded to f32 precision to match the declared dtype, so the tensor
/// survives container serialization exactly.
pub fn gaussian_tensor(name: &str, index: usize, dims: &[usize], seed: u64) -> WeightTensor {
    let shape = TensorShape::new(dims.to_vec()).expect("fixture dims are positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let values: Vec<f64> = (0..shape.element_count())
        .map(|_| f64::from(rng.sample::<f64, _>(rand_distr::StandardNormal) as f32))
        .collect();
    WeightTensor::new(name, index, shape, values, Dtype::F32).expect("finite fixture values")
}

fn stack(seed: u64, layers: &[(&str, &[usize])]) -> Vec<WeightTensor> {
    layers
        .iter()
        .enumerate()
        .map(|(index, (name, dims))| gaussian_tensor(name, index, dims, seed))
        .collect()
}

/// LeNet-5 for 28x28 inputs with padded 5x5 convolutions: conv 1->32,
/// conv 32->64, fc 3136->512, fc 512->10, with biases. Exactly 1,663,370
/// parameters.
pub fn lenet5(seed: u64) -> Vec<WeightTensor> {
    stack(
        seed,
        &[
            ("conv1", &[32, 1, 5, 5]),
            ("conv1_bias", &[32]),
            ("conv2", &[64, 32, 5, 5]),
            ("conv2_bias", &[64]),
            ("fc1", &[512, 3136]),
            ("fc1_bias", &[512]),
            ("fc2", &[10, 512]),
            ("fc2_bias", &[10]),
        ],
    )
}

/// The VGG-16 layer layout at one sixteenth of the channel widths: thirteen
/// 3x3 convolution blocks plus three dense layers, with biases. Shape-faithful
/// but desk-scale, for exercising multi-layer configs such as skipping the
/// first and last layers.
pub fn vgg16_slim(seed: u64) -> Vec<WeightTensor> {
    stack(
        seed,
        &[
            ("conv1_1", &[4, 3, 3, 3]),
            ("conv1_1_bias", &[4]),
            ("conv1_2", &[4, 4, 3, 3]),
            ("conv1_2_bias", &[4]),
            ("conv2_1", &[8, 4, 3, 3]),
            ("conv2_1_bias", &[8]),
            ("conv2_2", &[8, 8, 3, 3]),
            ("conv2_2_bias", &[8]),
            ("conv3_1", &[16, 8, 3, 3]),
            ("conv3_1_bias", &[16]),
            ("conv3_2", &[16, 16, 3, 3]),
            ("conv3_2_bias", &[16]),
            ("conv3_3", &[16, 16, 3, 3]),
            ("conv3_3_bias", &[16]),
            ("conv4_1", &[32, 16, 3, 3]),
            ("conv4_1_bias", &[32]),
            ("conv4_2", &[32, 32, 3, 3]),
            ("conv4_2_bias", &[32]),
            ("conv4_3", &[32, 32, 3, 3]),
            ("conv4_3_bias", &[32]),
            ("conv5_1", &[32, 32, 3, 3]),
            ("conv5_1_bias", &[32]),
            ("conv5_2", &[32, 32, 3, 3]),
            ("conv5_2_bias", &[32]),
            ("conv5_3", &[32, 32, 3, 3]),
            ("conv5_3_bias", &[32]),
            ("fc6", &[256, 1568]),
            ("fc6_bias", &[256]),
            ("fc7", &[256, 256]),
            ("fc7_bias", &[256]),
            ("fc8", &[10, 256]),
            ("fc8_bias", &[10]),
        ],
    )
}
