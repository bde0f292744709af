//! Dataset cleaning filters.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DropReason, GeoError, Inventory, InventoryRecord, LocalProjection, SampleManifest};
use crate::net::{ClutterLabel, ImagePatch};

pub const DEFAULT_MIN_FILE_BYTES: u64 = 184_320;
pub const DEFAULT_WINDOW_SIDE: usize = 75;
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.3;
pub const DEFAULT_COLOCATION_RADIUS_M: f64 = 2.0;
pub const IMAGE_SIDE: usize = 640;

/// A detector box in pixel coordinates, origin top-left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub image_id: String,
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
    pub score: f64,
}

impl DetectionBox {
    pub fn validate(&self, image_side: usize) -> Result<(), String> {
        let s = image_side as f64;
        let coords = [self.xmin, self.ymin, self.xmax, self.ymax];
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0 || *c > s) {
            return Err(format!("box {coords:?} outside {image_side}x{image_side}"));
        }
        if self.xmin >= self.xmax || self.ymin >= self.ymax {
            return Err(format!("degenerate box {coords:?}"));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        Ok(())
    }
}

/// Read `image_id,xmin,ymin,xmax,ymax,score`, grouped by image id.
pub fn read_detections<R: Read>(reader: R, image_side: usize) -> Result<HashMap<String, Vec<DetectionBox>>, GeoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| GeoError::Csv { line: 1, message: e.to_string() })?;
    let want = ["image_id", "xmin", "ymin", "xmax", "ymax", "score"];
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(GeoError::Csv { line: 1, message: format!("expected header {}", want.join(",")) });
    }
    let mut out: HashMap<String, Vec<DetectionBox>> = HashMap::new();
    for (i, row) in rdr.deserialize::<DetectionBox>().enumerate() {
        let line = i as u64 + 2;
        let b = row.map_err(|e| GeoError::Csv { line, message: e.to_string() })?;
        b.validate(image_side).map_err(|message| GeoError::Csv { line, message })?;
        out.entry(b.image_id.clone()).or_default().push(b);
    }
    Ok(out)
}

pub fn read_detections_file(path: &Path, image_side: usize) -> Result<HashMap<String, Vec<DetectionBox>>, GeoError> {
    let f = std::fs::File::open(path).map_err(|e| GeoError::io(path, e))?;
    read_detections(std::io::BufReader::new(f), image_side).map_err(|e| e.in_file(path))
}

/// Closed pixel interval `[offset, offset + side]` of the centred window on
/// both axes.
pub fn center_window(image_side: usize, window_side: usize) -> (f64, f64) {
    let off = (image_side.saturating_sub(window_side) / 2) as f64;
    (off, off + window_side as f64)
}

pub fn tree_in_window(detections: &[DetectionBox], image_side: usize, window_side: usize, score_threshold: f64) -> bool {
    let (lo, hi) = center_window(image_side, window_side);
    detections
        .iter()
        .any(|b| b.score >= score_threshold && b.xmin <= hi && b.xmax >= lo && b.ymin <= hi && b.ymax >= lo)
}

/// `true` to keep: the detector and the inventory label agree on whether a
/// tree sits at the centre.
pub fn filter_tree_consistency(
    label: ClutterLabel,
    detections: &[DetectionBox],
    image_side: usize,
    window_side: usize,
    score_threshold: f64,
) -> bool {
    tree_in_window(detections, image_side, window_side, score_threshold) == label.is_tree()
}

/// Drop kept entries whose encoded size is below `threshold_bytes`.
pub fn filter_file_size(manifest: &mut SampleManifest, threshold_bytes: u64) {
    for e in &mut manifest.entries {
        if e.byte_size.is_some_and(|s| s < threshold_bytes) {
            e.drop_for(DropReason::LowDetail);
        }
    }
}

/// Ids of records within `radius_m` of a record with a different label.
/// Uses a projection about the inventory centroid and a grid of
/// `radius_m` cells; every record takes part regardless of other filters.
pub fn colocated_ids(records: &[InventoryRecord], radius_m: f64) -> HashSet<String> {
    let mut hits = HashSet::new();
    let Some(proj) = LocalProjection::about_centroid(records.iter().map(|r| &r.point)) else {
        return hits;
    };
    if !(radius_m > 0.0) {
        return hits;
    }
    let xy: Vec<[f64; 2]> = records.iter().map(|r| proj.project(&r.point)).collect();
    let cell = |p: &[f64; 2]| ((p[0] / radius_m).floor() as i64, (p[1] / radius_m).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in xy.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    for (i, p) in xy.iter().enumerate() {
        let (cx, cy) = cell(p);
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for &j in grid.get(&(cx + dx, cy + dy)).map(Vec::as_slice).unwrap_or(&[]) {
                    if j != i
                        && records[j].label != records[i].label
                        && (xy[j][0] - p[0]).hypot(xy[j][1] - p[1]) <= radius_m
                    {
                        hits.insert(records[i].id.clone());
                        break 'search;
                    }
                }
            }
        }
    }
    hits
}

pub fn filter_colocated(inventory: &Inventory, manifest: &mut SampleManifest, radius_m: f64) {
    let hits = colocated_ids(inventory.records(), radius_m);
    for e in &mut manifest.entries {
        if hits.contains(&e.id) {
            e.drop_for(DropReason::ClassCollision);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CleanConfig {
    pub min_file_bytes: u64,
    pub window_side: usize,
    pub detector_score_threshold: f64,
    pub colocation_radius_m: f64,
    pub image_side: usize,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            min_file_bytes: DEFAULT_MIN_FILE_BYTES,
            window_side: DEFAULT_WINDOW_SIDE,
            detector_score_threshold: DEFAULT_SCORE_THRESHOLD,
            colocation_radius_m: DEFAULT_COLOCATION_RADIUS_M,
            image_side: IMAGE_SIDE,
        }
    }
}

/// Apply all three filters. Predicates are evaluated on the input
/// independently; a record failing several gets the first reason in
/// [`DropReason::ALL`] order.
pub fn clean(
    inventory: &Inventory,
    manifest: &SampleManifest,
    detections: &HashMap<String, Vec<DetectionBox>>,
    config: &CleanConfig,
) -> Result<SampleManifest, GeoError> {
    let labels: HashMap<&str, ClutterLabel> = inventory.records().iter().map(|r| (r.id.as_str(), r.label)).collect();
    let colocated = colocated_ids(inventory.records(), config.colocation_radius_m);
    let mut out = manifest.clone();
    for e in &mut out.entries {
        if !e.is_kept() {
            continue;
        }
        let label = *labels
            .get(e.id.as_str())
            .ok_or_else(|| GeoError::Mapping(format!("manifest id `{}` not in inventory", e.id)))?;
        let boxes = detections.get(&e.id).map(Vec::as_slice).unwrap_or(&[]);
        if e.byte_size.is_some_and(|s| s < config.min_file_bytes) {
            e.drop_for(DropReason::LowDetail);
        } else if !filter_tree_consistency(label, boxes, config.image_side, config.window_side, config.detector_score_threshold) {
            e.drop_for(DropReason::DetectorMismatch);
        } else if colocated.contains(&e.id) {
            e.drop_for(DropReason::ClassCollision);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreennessDetector {
    /// Green must exceed both red and blue by this much.
    pub margin: u8,
    pub min_pixels: usize,
}

impl Default for GreennessDetector {
    fn default() -> Self {
        Self { margin: 20, min_pixels: 64 }
    }
}

impl GreennessDetector {
    /// Boxes around 4-connected green components; score is the fraction of
    /// the box the component fills.
    pub fn detect(&self, image_id: &str, image: &ImagePatch) -> Vec<DetectionBox> {
        let (w, h) = (image.width(), image.height());
        let green: Vec<bool> = image
            .data()
            .chunks_exact(3)
            .map(|p| {
                let (r, g, b) = (p[0] as i32, p[1] as i32, p[2] as i32);
                g - r.max(b) > self.margin as i32
            })
            .collect();
        let mut seen = vec![false; w * h];
        let mut boxes = Vec::new();
        let mut stack = Vec::new();
        for start in 0..w * h {
            if !green[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let (mut x0, mut y0, mut x1, mut y1, mut n) = (w, h, 0, 0, 0usize);
            while let Some(i) = stack.pop() {
                let (x, y) = (i % w, i / w);
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
                n += 1;
                let mut push = |j: usize| {
                    if green[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if x > 0 {
                    push(i - 1);
                }
                if x + 1 < w {
                    push(i + 1);
                }
                if y > 0 {
                    push(i - w);
                }
                if y + 1 < h {
                    push(i + w);
                }
            }
            if n >= self.min_pixels {
                let area = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
                boxes.push(DetectionBox {
                    image_id: image_id.to_string(),
                    xmin: x0 as f64,
                    ymin: y0 as f64,
                    xmax: (x1 + 1) as f64,
                    ymax: (y1 + 1) as f64,
                    score: n as f64 / area,
                });
            }
        }
        boxes
    }
}
