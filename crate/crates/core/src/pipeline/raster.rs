//! Clutter maps: classify a regular grid of locations and write the result
//! as an indexed PNG with a JSON georeferencing sidecar.

use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Ensemble, PipelineError};
use crate::geo::{GeoPoint, ImageProvider, LocalProjection};
use crate::net::{center_crop, normalize, ClutterLabel, ImagePatch};

/// Palette index of cells whose imagery could not be fetched or classified.
pub const UNKNOWN_INDEX: u8 = 255;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64) -> Result<Self, PipelineError> {
        GeoPoint::new(min_lat, min_lon)?;
        GeoPoint::new(max_lat, max_lon)?;
        if !(max_lat > min_lat && max_lon > min_lon) {
            return Err(PipelineError::Config("bounding box has zero or negative area".into()));
        }
        Ok(Self { min_lat, min_lon, max_lat, max_lon })
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint::new((self.min_lat + self.max_lat) / 2.0, (self.min_lon + self.max_lon) / 2.0).expect("validated")
    }
}

/// Row-major cells, row 0 at the north edge.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRaster {
    /// North-west corner.
    pub origin: GeoPoint,
    pub pixel_size_m: f64,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Option<ClutterLabel>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub index: u8,
    pub label: String,
    pub rgb: [u8; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterSidecar {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub pixel_size_m: f64,
    pub width: usize,
    pub height: usize,
    pub legend: Vec<LegendEntry>,
}

pub fn label_color(label: ClutterLabel) -> [u8; 3] {
    match label {
        ClutterLabel::Deciduous => [0, 100, 0],
        ClutterLabel::Coniferous => [144, 238, 144],
        ClutterLabel::Residential => [255, 165, 0],
        ClutterLabel::NonResidential => [220, 20, 20],
        ClutterLabel::Other => [128, 128, 128],
    }
}

fn legend() -> Vec<LegendEntry> {
    let mut v: Vec<_> = ClutterLabel::ALL
        .iter()
        .map(|&l| LegendEntry { index: l.index() as u8, label: l.as_str().into(), rgb: label_color(l) })
        .collect();
    v.push(LegendEntry { index: UNKNOWN_INDEX, label: "unknown".into(), rgb: [0, 0, 0] });
    v
}

/// Grid of centre points covering `bbox` with square cells of
/// `pixel_size_m`, together with the grid origin and dimensions.
fn grid(bbox: &BoundingBox, pixel_size_m: f64) -> Result<(GeoPoint, usize, usize, Vec<GeoPoint>), PipelineError> {
    if !(pixel_size_m > 0.0 && pixel_size_m.is_finite()) {
        return Err(PipelineError::Config(format!("pixel size must be positive, got {pixel_size_m}")));
    }
    let proj = LocalProjection::new(bbox.center());
    let nw = GeoPoint::new(bbox.max_lat, bbox.min_lon)?;
    let se = GeoPoint::new(bbox.min_lat, bbox.max_lon)?;
    let [x0, y0] = proj.project(&nw);
    let [x1, y1] = proj.project(&se);
    let width = ((x1 - x0) / pixel_size_m).ceil().max(1.0) as usize;
    let height = ((y0 - y1) / pixel_size_m).ceil().max(1.0) as usize;
    let mut points = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let x = x0 + (c as f64 + 0.5) * pixel_size_m;
            let y = y0 - (r as f64 + 0.5) * pixel_size_m;
            points.push(proj.unproject([x, y])?);
        }
    }
    Ok((nw, width, height, points))
}

fn classify_point(
    key: &str,
    point: &GeoPoint,
    ensemble: &Ensemble,
    provider: &dyn ImageProvider,
) -> Result<ClutterLabel, String> {
    let bytes = provider.fetch(key, point).map_err(|e| e.to_string())?;
    let img = ImagePatch::decode(&bytes).map_err(|e| e.to_string())?;
    let img = center_crop(&img, ensemble.input_side()).map_err(|e| e.to_string())?;
    let d = ensemble.classify(&normalize(&img)).map_err(|e| e.to_string())?;
    Ok(d.label)
}

/// Classify every cell centre of the grid over `bbox`. Cells whose imagery
/// cannot be fetched or decoded are left unknown.
pub fn classify_grid(
    bbox: &BoundingBox,
    pixel_size_m: f64,
    ensemble: &Ensemble,
    provider: &dyn ImageProvider,
    parallelism: usize,
) -> Result<LabeledRaster, PipelineError> {
    let (origin, width, height, points) = grid(bbox, pixel_size_m)?;
    let work = |(i, p): (usize, &GeoPoint)| {
        let key = format!("cell_{}_{}", i / width, i % width);
        match classify_point(&key, p, ensemble, provider) {
            Ok(l) => Some(l),
            Err(e) => {
                log::warn!("{key} ({:.6}, {:.6}): {e}", p.lat(), p.lon());
                None
            }
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let cells = pool.install(|| points.par_iter().enumerate().map(work).collect());
    Ok(LabeledRaster { origin, pixel_size_m, width, height, cells })
}

impl LabeledRaster {
    pub fn indices(&self) -> Vec<u8> {
        self.cells.iter().map(|c| c.map_or(UNKNOWN_INDEX, |l| l.index() as u8)).collect()
    }

    pub fn sidecar(&self) -> RasterSidecar {
        RasterSidecar {
            origin_lat: self.origin.lat(),
            origin_lon: self.origin.lon(),
            pixel_size_m: self.pixel_size_m,
            width: self.width,
            height: self.height,
            legend: legend(),
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, png::EncodingError> {
        let mut palette = vec![0u8; 256 * 3];
        for e in legend() {
            let i = e.index as usize * 3;
            palette[i..i + 3].copy_from_slice(&e.rgb);
        }
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Indexed);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_palette(palette);
            let mut w = enc.write_header()?;
            w.write_image_data(&self.indices())?;
        }
        Ok(out)
    }

    /// Write `path` (PNG) and `path` with a `.json` extension (sidecar).
    pub fn write(&self, path: &Path) -> io::Result<()> {
        let png = self.encode_png().map_err(io::Error::other)?;
        let json = serde_json::to_vec_pretty(&self.sidecar()).map_err(io::Error::other)?;
        crate::io::write_atomic(path, &png)?;
        crate::io::write_atomic(&path.with_extension("json"), &json)
    }
}
