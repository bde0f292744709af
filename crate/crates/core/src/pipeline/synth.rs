//! Procedural class textures and a synthetic city for exercising the
//! pipeline without real imagery.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, PipelineError, Sample};
use crate::geo::{FetchError, GeoPoint, ImageProvider, Inventory, InventoryRecord, LocalProjection};
use crate::net::{ClutterLabel, ImagePatch};

struct Style {
    base: [f64; 3],
    accent: [f64; 3],
    /// Wavelength of the texture in pixels.
    period: f64,
    waves: usize,
}

fn style(label: ClutterLabel) -> Style {
    match label {
        ClutterLabel::Deciduous => Style { base: [34.0, 82.0, 30.0], accent: [70.0, 120.0, 45.0], period: 22.0, waves: 5 },
        ClutterLabel::Coniferous => Style { base: [105.0, 165.0, 85.0], accent: [60.0, 120.0, 70.0], period: 5.0, waves: 7 },
        ClutterLabel::Residential => Style { base: [205.0, 125.0, 55.0], accent: [150.0, 90.0, 50.0], period: 12.0, waves: 2 },
        ClutterLabel::NonResidential => Style { base: [175.0, 45.0, 40.0], accent: [120.0, 30.0, 35.0], period: 40.0, waves: 2 },
        ClutterLabel::Other => Style { base: [125.0, 125.0, 120.0], accent: [150.0, 150.0, 145.0], period: 60.0, waves: 3 },
    }
}

/// One random texture patch of `label`. Orientation and phase are drawn
/// fresh, so class statistics do not depend on rotation or reflection.
pub fn synth_image<R: Rng + ?Sized>(label: ClutterLabel, side: usize, rng: &mut R) -> ImagePatch {
    let st = style(label);
    let waves: Vec<(f64, f64, f64)> = (0..st.waves)
        .map(|_| {
            let theta = rng.random_range(0.0..TAU);
            let f = TAU / (st.period * rng.random_range(0.8..1.25));
            (f * theta.cos(), f * theta.sin(), rng.random_range(0.0..TAU))
        })
        .collect();
    let gain = rng.random_range(0.9..1.1);
    let mut noise = ChaCha8Rng::seed_from_u64(rng.random());
    ImagePatch::from_fn(side, side, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let s: f64 = waves.iter().map(|&(fx, fy, ph)| (fx * xf + fy * yf + ph).sin()).sum::<f64>() / st.waves as f64;
        let t = (0.5 + 0.5 * s).clamp(0.0, 1.0);
        let mut px = [0u8; 3];
        for c in 0..3 {
            let v = (st.base[c] * (1.0 - t) + st.accent[c] * t) * gain + noise.random_range(-8.0..8.0);
            px[c] = v.round().clamp(0.0, 255.0) as u8;
        }
        px
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthCityConfig {
    pub samples_per_class: usize,
    pub blobs: usize,
    /// Spread of each blob (uniform square half-width) in metres.
    pub blob_radius_m: f64,
    /// Distance between neighbouring blob centres in metres.
    pub blob_spacing_m: f64,
    pub center: [f64; 2],
    pub image_side: usize,
    pub seed: u64,
}

impl Default for SynthCityConfig {
    fn default() -> Self {
        Self {
            samples_per_class: 200,
            blobs: 5,
            blob_radius_m: 400.0,
            blob_spacing_m: 5_000.0,
            center: [45.42, -75.70],
            image_side: 112,
            seed: 2024,
        }
    }
}

/// Records spread over `blobs` well-separated clusters, each holding every
/// class in equal measure, with one texture image per record.
pub fn synth_city(config: &SynthCityConfig) -> Result<(Inventory, Vec<ImagePatch>), PipelineError> {
    if config.blobs == 0 || config.samples_per_class == 0 {
        return Err(PipelineError::Config("synthetic city needs blobs and samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let proj = LocalProjection::new(GeoPoint::new(config.center[0], config.center[1])?);
    let centres: Vec<[f64; 2]> = (0..config.blobs)
        .map(|b| {
            let a = TAU * b as f64 / config.blobs as f64;
            [config.blob_spacing_m * a.cos(), config.blob_spacing_m * a.sin()]
        })
        .collect();
    let mut records = Vec::new();
    let mut images = Vec::new();
    for label in ClutterLabel::ALL {
        for i in 0..config.samples_per_class {
            let c = centres[i % config.blobs];
            let r = config.blob_radius_m;
            let xy = [c[0] + rng.random_range(-r..=r), c[1] + rng.random_range(-r..=r)];
            let point = proj.unproject(xy)?;
            records.push(InventoryRecord::new(format!("{}-{i:04}", label.as_str()), point, label, "synth"));
            images.push(synth_image(label, config.image_side, &mut rng));
        }
    }
    Ok((Inventory::new(records)?, images))
}

/// [`synth_city`] preprocessed straight into a dataset.
pub fn synth_dataset(config: &SynthCityConfig, side: usize) -> Result<Dataset, PipelineError> {
    let (inv, images) = synth_city(config)?;
    let samples = inv
        .records()
        .iter()
        .zip(&images)
        .map(|(r, img)| Sample::from_image(r.id.clone(), r.label, r.point, img, side))
        .collect::<Result<_, _>>()?;
    Ok(Dataset::new(samples))
}

/// Serves a fresh texture of one class for every request, seeded by key.
#[derive(Clone, Debug)]
pub struct TextureProvider {
    pub label: ClutterLabel,
    pub side: usize,
    pub seed: u64,
}

impl ImageProvider for TextureProvider {
    fn fetch(&self, key: &str, _point: &GeoPoint) -> Result<Vec<u8>, FetchError> {
        let mut rng = ChaCha8Rng::seed_from_u64(super::derive_seed(self.seed, key, 0));
        synth_image(self.label, self.side, &mut rng).encode_png().map_err(|e| FetchError::Transport(e.to_string()))
    }
}
