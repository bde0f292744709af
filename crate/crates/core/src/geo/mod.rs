//! Inventory assembly, imagery fetching and dataset cleaning.

mod clean;
mod inventory;
mod manifest;
mod mapping;
mod point;
mod polygon;
mod provider;

use std::path::Path;

pub use clean::{
    center_window, clean, colocated_ids, filter_colocated, filter_file_size, filter_tree_consistency, read_detections,
    read_detections_file, tree_in_window, CleanConfig, DetectionBox, GreennessDetector, DEFAULT_COLOCATION_RADIUS_M,
    DEFAULT_MIN_FILE_BYTES, DEFAULT_SCORE_THRESHOLD, DEFAULT_WINDOW_SIDE, IMAGE_SIDE,
};
pub use inventory::{build_inventory, read_points, read_points_file, Inventory, InventoryRecord, SourcePoint, INVENTORY_HEADER};
pub use manifest::{DropReason, ManifestEntry, SampleManifest, SampleStatus, MANIFEST_HEADER};
pub use mapping::{classify_species, label_trees, BuildingTypeMap, ReviewItem, SpeciesMap};
pub use point::{GeoPoint, LocalProjection, EARTH_RADIUS_M};
pub use polygon::{footprint_points, join_point, parse_building_geojson, spatial_join_buildings, FeatureDiagnostic, TypedPolygon};
pub use provider::{
    fetch_all, fetch_image, fill_template, safe_file_stem, FetchError, FetchedImage, ImageProvider, LocalDirProvider,
    RateLimiter, RetryPolicy, UrlProviderConfig, UrlTemplateProvider,
};

#[derive(Debug, thiserror::Error)]
pub enum GeoError {
    #[error("{0}")]
    Coordinate(String),
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("{file}: {source}")]
    InFile { file: String, source: Box<GeoError> },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("unmapped building type `{0}`")]
    UnmappedBuildingType(String),
    #[error("{0}")]
    Mapping(String),
    #[error("GeoJSON: {0}")]
    GeoJson(String),
}

impl GeoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        GeoError::Io { path: path.display().to_string(), source }
    }

    /// Prefix a parse error with the file it came from.
    pub fn in_file(self, path: &Path) -> Self {
        match self {
            e @ (GeoError::Io { .. } | GeoError::InFile { .. }) => e,
            e => GeoError::InFile { file: path.display().to_string(), source: Box::new(e) },
        }
    }
}
