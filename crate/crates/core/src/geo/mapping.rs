//! Source-attribute to clutter-class mappings.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeoError, InventoryRecord, SourcePoint};
use crate::net::ClutterLabel;

fn fold(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// A record that could not be labeled automatically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub source: String,
    pub id: String,
    pub reason: String,
}

const CONIFERS: &[&str] = &[
    "pine", "spruce", "fir", "cedar", "hemlock", "larch", "tamarack", "juniper", "yew", "cypress", "redwood",
    "sequoia", "arborvitae", "thuja", "pinus", "picea", "abies", "tsuga", "larix", "juniperus", "taxus",
];

const BROADLEAVES: &[&str] = &[
    "maple", "oak", "elm", "ash", "birch", "beech", "basswood", "linden", "poplar", "aspen", "cottonwood",
    "willow", "cherry", "apple", "crabapple", "pear", "plum", "locust", "honeylocust", "walnut", "butternut",
    "hickory", "chestnut", "horsechestnut", "catalpa", "hackberry", "ironwood", "hawthorn", "serviceberry",
    "lilac", "magnolia", "ginkgo", "katsura", "hornbeam", "alder", "mulberry", "sumac", "dogwood",
    "buckeye", "sycamore", "planetree", "tulip", "coffeetree", "acer", "quercus", "ulmus", "fraxinus",
    "betula", "tilia", "populus", "salix", "prunus", "malus", "gleditsia", "juglans", "carya", "celtis",
];

/// Maps species names to Deciduous or Coniferous. Lookup tries the whole
/// case-folded name, then each word from the last (so "white pine" falls
/// back to "pine").
#[derive(Clone, Debug, PartialEq)]
pub struct SpeciesMap {
    entries: BTreeMap<String, ClutterLabel>,
}

impl Default for SpeciesMap {
    fn default() -> Self {
        let mut entries = BTreeMap::new();
        for &w in CONIFERS {
            entries.insert(w.to_string(), ClutterLabel::Coniferous);
        }
        for &w in BROADLEAVES {
            entries.insert(w.to_string(), ClutterLabel::Deciduous);
        }
        Self { entries }
    }
}

impl SpeciesMap {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, species: &str, label: ClutterLabel) -> Result<(), GeoError> {
        if !label.is_tree() {
            return Err(GeoError::Mapping(format!("species `{species}` mapped to non-tree class {label}")));
        }
        self.entries.insert(fold(species), label);
        Ok(())
    }

    /// Add entries from a `species,label` CSV, overriding existing ones.
    pub fn extend_from_csv<R: Read>(&mut self, reader: R) -> Result<(), GeoError> {
        for (line, key, value) in read_pairs(reader)? {
            let label: ClutterLabel =
                value.parse().map_err(|e: crate::net::UnknownLabel| GeoError::Csv { line, message: e.to_string() })?;
            self.insert(&key, label).map_err(|e| GeoError::Csv { line, message: e.to_string() })?;
        }
        Ok(())
    }

    pub fn classify(&self, species: &str) -> Option<ClutterLabel> {
        let key = fold(species);
        if key.is_empty() {
            return None;
        }
        if let Some(&l) = self.entries.get(&key) {
            return Some(l);
        }
        key.split(|c: char| c.is_whitespace() || c == ',' || c == '-')
            .rev()
            .find_map(|w| self.entries.get(w).copied())
    }
}

/// Species lookup with unknowns routed to review.
pub fn classify_species(species: &str, map: &SpeciesMap) -> Result<ClutterLabel, String> {
    map.classify(species).ok_or_else(|| {
        if species.trim().is_empty() {
            "missing species".to_string()
        } else {
            format!("unknown species `{}`", species.trim())
        }
    })
}

/// Label tree points by their `species_column` attribute.
pub fn label_trees(
    points: Vec<SourcePoint>,
    source: &str,
    species_column: &str,
    map: &SpeciesMap,
) -> (Vec<InventoryRecord>, Vec<ReviewItem>) {
    let mut records = Vec::new();
    let mut review = Vec::new();
    for p in points {
        let species = p.attributes.get(species_column).map(String::as_str).unwrap_or("");
        match classify_species(species, map) {
            Ok(label) => records.push(InventoryRecord {
                id: p.id,
                point: p.point,
                label,
                source: source.to_string(),
                attributes: p.attributes,
            }),
            Err(reason) => review.push(ReviewItem { source: source.to_string(), id: p.id, reason }),
        }
    }
    (records, review)
}

const RESIDENTIAL_TYPES: &[&str] = &[
    "residential", "house", "detached", "semidetached_house", "semi-detached", "terrace", "apartments",
    "apartment", "bungalow", "cabin", "dormitory", "farm", "houseboat", "static_caravan", "duplex", "townhouse",
];

const NON_RESIDENTIAL_TYPES: &[&str] = &[
    "non_residential", "commercial", "industrial", "retail", "office", "warehouse", "sports", "sports_hall",
    "stadium", "hospital", "school", "university", "college", "kindergarten", "church", "chapel", "mosque",
    "synagogue", "temple", "civic", "government", "public", "fire_station", "train_station", "transportation",
    "hotel", "supermarket", "garage", "garages", "parking", "hangar", "barn", "shed", "service", "greenhouse",
    "manufacture", "library", "museum",
];

/// Building-type strings to Residential or NonResidential; lookups of
/// unmapped strings fail.
#[derive(Clone, Debug, PartialEq)]
pub struct BuildingTypeMap {
    entries: BTreeMap<String, ClutterLabel>,
}

impl Default for BuildingTypeMap {
    fn default() -> Self {
        let mut entries = BTreeMap::new();
        for &t in RESIDENTIAL_TYPES {
            entries.insert(t.to_string(), ClutterLabel::Residential);
        }
        for &t in NON_RESIDENTIAL_TYPES {
            entries.insert(t.to_string(), ClutterLabel::NonResidential);
        }
        Self { entries }
    }
}

impl BuildingTypeMap {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, building_type: &str, label: ClutterLabel) -> Result<(), GeoError> {
        if label.coarse() != crate::net::CoarseLabel::Building {
            return Err(GeoError::Mapping(format!("building type `{building_type}` mapped to {label}")));
        }
        self.entries.insert(fold(building_type), label);
        Ok(())
    }

    /// Entries from a `building_type,label` CSV.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, GeoError> {
        let mut map = Self::empty();
        for (line, key, value) in read_pairs(reader)? {
            let label: ClutterLabel =
                value.parse().map_err(|e: crate::net::UnknownLabel| GeoError::Csv { line, message: e.to_string() })?;
            map.insert(&key, label).map_err(|e| GeoError::Csv { line, message: e.to_string() })?;
        }
        Ok(map)
    }

    pub fn from_csv_file(path: &Path) -> Result<Self, GeoError> {
        let f = std::fs::File::open(path).map_err(|e| GeoError::io(path, e))?;
        Self::from_csv(std::io::BufReader::new(f)).map_err(|e| e.in_file(path))
    }

    pub fn classify(&self, building_type: &str) -> Result<ClutterLabel, GeoError> {
        self.entries
            .get(&fold(building_type))
            .copied()
            .ok_or_else(|| GeoError::UnmappedBuildingType(building_type.to_string()))
    }
}

fn read_pairs<R: Read>(reader: R) -> Result<Vec<(u64, String, String)>, GeoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| GeoError::Csv { line, message: e.to_string() })?;
        if rec.len() != 2 {
            return Err(GeoError::Csv { line, message: format!("expected 2 fields, found {}", rec.len()) });
        }
        out.push((line, rec[0].to_string(), rec[1].trim().to_string()));
    }
    Ok(out)
}
