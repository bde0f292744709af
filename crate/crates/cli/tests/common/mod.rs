//! Helpers for driving the `clutter` binary.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use clutter::net::{ImagePatch, ModelKind, NetConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn clutter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clutter")).args(args).output().expect("spawn clutter")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// 640x640 noise; far above the low-detail size threshold once encoded.
pub fn write_noise_png(path: &Path, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = ImagePatch::from_fn(640, 640, |_, _| [rng.random(), rng.random(), rng.random()]);
    std::fs::write(path, img.encode_png().unwrap()).unwrap();
}

/// 640x640 flat colour; compresses to a few kilobytes.
pub fn write_flat_png(path: &Path) {
    let img = ImagePatch::from_fn(640, 640, |_, _| [90, 90, 90]);
    std::fs::write(path, img.encode_png().unwrap()).unwrap();
}

pub fn small_net() -> serde_json::Value {
    let net = NetConfig { input_side: 16, conv_block_channels: vec![4, 4], ..ModelKind::Stage1.default_config() };
    serde_json::to_value(net).unwrap()
}

/// A fast cross-validation config over a small synthetic city.
pub fn tiny_run_config(dir: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "seed": 5,
        "dataset": {"synth": {"samples_per_class": 12, "blobs": 3, "image_side": 16, "seed": 3}},
        "independent": {"synth": {"samples_per_class": 4, "blobs": 3, "image_side": 16, "seed": 9}},
        "cv": {
            "k": 3,
            "train": {"epochs": 2, "batch_size": 8, "augmentation": "random_per_epoch", "augment_validation": false},
            "net": small_net()
        }
    });
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}
