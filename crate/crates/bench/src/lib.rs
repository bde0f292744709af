//! Inputs shared by the benchmarks.

use clutter::net::{normalize, ImagePatch};
use clutter::nn::Tensor;
use clutter::pipeline::synth_image;
use clutter::ClutterLabel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: Vec<usize>, seed: u64) -> Tensor<f32> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

/// `n` normalized texture images cycling through the classes, stacked
/// into one `n x 3 x side x side` batch.
pub fn texture_batch(n: usize, side: usize, seed: u64) -> Tensor<f32> {
    let mut r = rng(seed);
    let mut data = Vec::with_capacity(n * 3 * side * side);
    for i in 0..n {
        let img = synth_image(ClutterLabel::ALL[i % 5], side, &mut r);
        data.extend_from_slice(normalize(&img).data());
    }
    Tensor::new(vec![n, 3, side, side], data).expect("consistent batch")
}

pub fn texture_image(label: ClutterLabel, side: usize, seed: u64) -> ImagePatch {
    synth_image(label, side, &mut rng(seed))
}
