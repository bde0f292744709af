use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::PipelineError;
use crate::geo::{GeoPoint, Inventory, SampleManifest};
use crate::net::{center_crop, normalize, ClutterLabel, ImagePatch};
use crate::nn::Tensor;

/// A labeled, preprocessed training or test sample.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub label: ClutterLabel,
    pub point: GeoPoint,
    /// Normalized `3 x side x side` crop.
    pub image: Arc<Tensor<f32>>,
}

impl Sample {
    pub fn from_image(id: impl Into<String>, label: ClutterLabel, point: GeoPoint, image: &ImagePatch, side: usize) -> Result<Self, PipelineError> {
        let crop = center_crop(image, side)?;
        Ok(Self { id: id.into(), label, point, image: Arc::new(normalize(&crop)) })
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn histogram(&self) -> BTreeMap<ClutterLabel, usize> {
        let mut h: BTreeMap<ClutterLabel, usize> = ClutterLabel::ALL.iter().map(|&l| (l, 0)).collect();
        for s in &self.samples {
            *h.entry(s.label).or_default() += 1;
        }
        h
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&Sample> {
        indices.iter().map(|&i| &self.samples[i]).collect()
    }

    /// Kept manifest entries joined with their inventory records, in
    /// manifest order. Images are decoded and centre-cropped to `side`.
    pub fn load(inventory: &Inventory, manifest: &SampleManifest, side: usize) -> Result<Self, PipelineError> {
        let by_id: std::collections::HashMap<&str, _> = inventory.records().iter().map(|r| (r.id.as_str(), r)).collect();
        let jobs: Vec<_> = manifest
            .kept()
            .map(|e| {
                let rec = by_id
                    .get(e.id.as_str())
                    .ok_or_else(|| PipelineError::Data(format!("manifest id `{}` not in inventory", e.id)))?;
                let path = e
                    .image_path
                    .clone()
                    .ok_or_else(|| PipelineError::Data(format!("kept entry `{}` has no image", e.id)))?;
                Ok((*rec, path))
            })
            .collect::<Result<_, PipelineError>>()?;
        let samples = jobs
            .par_iter()
            .map(|(rec, path)| {
                let img = ImagePatch::open(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
                Sample::from_image(rec.id.clone(), rec.label, rec.point, &img, side)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { samples })
    }
}
