//! Randomized fixtures: votes, images, checkpoints, a synthetic city.

use clutter::geo::GeoPoint;
use clutter::net::{build_network, Checkpoint, ImagePatch, ModelKind, NetConfig, TrainingMetadata};
use clutter::nn::Network;
use clutter::pipeline::{synth_city, SynthCityConfig, Vote};
use clutter::ClutterLabel;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_votes(rng: &mut ChaCha8Rng) -> Vec<Vote<ClutterLabel>> {
    let n = rng.random_range(1..=9);
    let pool = rng.random_range(1..=5);
    (0..n)
        .map(|_| Vote {
            label: ClutterLabel::ALL[rng.random_range(0..pool)],
            // coarse grid so equal means occur
            probability: f64::from(rng.random_range(1..=4u8)) / 4.0,
        })
        .collect()
}

pub fn shuffled<T: Clone>(items: &[T], rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(rng);
    v
}

pub fn random_image(rng: &mut ChaCha8Rng, side: usize) -> ImagePatch {
    ImagePatch::from_fn(side, side, |_, _| [rng.random(), rng.random(), rng.random()])
}

/// A checkpoint of random kind and width whose every parameter and buffer
/// is replaced by random values.
pub fn random_checkpoint(seed: u64) -> Checkpoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = ModelKind::ALL[rng.random_range(0..ModelKind::ALL.len())];
    let mut config: NetConfig = kind.default_config();
    config.input_side = [32, 64, 112][rng.random_range(0..3)];
    config.conv_block_channels = (0..4).map(|_| [4, 8, 16][rng.random_range(0..3)]).collect();
    let mut net: Network<f32> = build_network(&config, &mut rng).expect("valid config");
    let names: Vec<(String, usize)> = net.named_tensors().iter().map(|t| (t.name.clone(), t.tensor.numel())).collect();
    for (name, len) in names {
        let values = (0..len)
            .map(|_| {
                let v: f32 = rng.random_range(-0.5..0.5);
                if name.ends_with("running_var") { v.abs() + 0.1 } else { v }
            })
            .collect();
        net.set_tensor(&name, values).expect("known tensor");
    }
    let metadata = TrainingMetadata { seed, ..Default::default() };
    Checkpoint::new(kind, config, net, metadata).expect("consistent checkpoint")
}

/// Locations of the 1,000-record synthetic city (200 per class, 5 blobs).
pub fn city_points(seed: u64) -> Vec<GeoPoint> {
    let config = SynthCityConfig { samples_per_class: 200, blobs: 5, image_side: 8, seed, ..Default::default() };
    let (inventory, _) = synth_city(&config).expect("synthetic city");
    inventory.records().iter().map(|r| r.point).collect()
}
