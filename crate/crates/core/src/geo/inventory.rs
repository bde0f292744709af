use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GeoError, GeoPoint};
use crate::net::ClutterLabel;

pub const INVENTORY_HEADER: [&str; 6] = ["id", "lat", "lon", "label", "source", "attr_json"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InventoryRecord {
    pub id: String,
    pub point: GeoPoint,
    pub label: ClutterLabel,
    pub source: String,
    pub attributes: BTreeMap<String, String>,
}

impl InventoryRecord {
    pub fn new(id: impl Into<String>, point: GeoPoint, label: ClutterLabel, source: impl Into<String>) -> Self {
        Self { id: id.into(), point, label, source: source.into(), attributes: BTreeMap::new() }
    }

    pub fn with_attribute(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }
}

/// An ordered record list with unique ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Inventory {
    records: Vec<InventoryRecord>,
}

#[derive(Deserialize)]
struct Row {
    id: String,
    lat: f64,
    lon: f64,
    label: String,
    source: String,
    attr_json: String,
}

impl Inventory {
    pub fn new(records: Vec<InventoryRecord>) -> Result<Self, GeoError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(GeoError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[InventoryRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<InventoryRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&InventoryRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Count per class, every class present (possibly zero).
    pub fn histogram(&self) -> BTreeMap<ClutterLabel, usize> {
        let mut h: BTreeMap<ClutterLabel, usize> = ClutterLabel::ALL.iter().map(|&l| (l, 0)).collect();
        for r in &self.records {
            *h.entry(r.label).or_default() += 1;
        }
        h
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, GeoError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| GeoError::Csv { line: 1, message: e.to_string() })?.clone();
        if headers.iter().collect::<Vec<_>>() != INVENTORY_HEADER {
            return Err(GeoError::Csv {
                line: 1,
                message: format!("expected header {}, found {}", INVENTORY_HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut records = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let line = i as u64 + 2;
            let bad = |message: String| GeoError::Csv { line, message };
            let row = row.map_err(|e| bad(e.to_string()))?;
            let point = GeoPoint::new(row.lat, row.lon).map_err(|e| bad(e.to_string()))?;
            let label: ClutterLabel = row.label.parse().map_err(|e: crate::net::UnknownLabel| bad(e.to_string()))?;
            let attributes: BTreeMap<String, String> = if row.attr_json.trim().is_empty() {
                BTreeMap::new()
            } else {
                serde_json::from_str(&row.attr_json).map_err(|e| bad(format!("attr_json: {e}")))?
            };
            records.push(InventoryRecord { id: row.id, point, label, source: row.source, attributes });
        }
        Self::new(records)
    }

    pub fn read(path: &Path) -> Result<Self, GeoError> {
        let file = std::fs::File::open(path).map_err(|e| GeoError::io(path, e))?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<(), GeoError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let err = |e: csv::Error| GeoError::Csv { line: 0, message: e.to_string() };
        w.write_record(INVENTORY_HEADER).map_err(err)?;
        for r in &self.records {
            let attrs = serde_json::to_string(&r.attributes).expect("string map serializes");
            w.write_record([
                r.id.as_str(),
                &r.point.lat().to_string(),
                &r.point.lon().to_string(),
                r.label.as_str(),
                &r.source,
                &attrs,
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| GeoError::Csv { line: 0, message: e.to_string() })
    }

    pub fn write(&self, path: &Path) -> Result<(), GeoError> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf)?;
        crate::io::write_atomic(path, &buf).map_err(|e| GeoError::io(path, e))
    }

    /// Keep at most `quotas[label]` records of each listed class, chosen
    /// uniformly by `seed`; unlisted classes are kept whole. Input order is
    /// preserved among survivors.
    pub fn sample_per_class(&self, quotas: &BTreeMap<ClutterLabel, usize>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = vec![true; self.records.len()];
        for (&label, &quota) in quotas {
            let mut idx: Vec<usize> = (0..self.records.len()).filter(|&i| self.records[i].label == label).collect();
            if idx.len() > quota {
                idx.shuffle(&mut rng);
                for &i in &idx[quota..] {
                    keep[i] = false;
                }
            }
        }
        let records = self.records.iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r.clone()).collect();
        Self { records }
    }
}

/// Concatenate record groups under namespaced ids `"{source}:{id}"`.
pub fn build_inventory(
    trees: Vec<InventoryRecord>,
    buildings: Vec<InventoryRecord>,
    others: Vec<InventoryRecord>,
) -> Result<Inventory, GeoError> {
    let records = trees
        .into_iter()
        .chain(buildings)
        .chain(others)
        .map(|mut r| {
            r.id = format!("{}:{}", r.source, r.id);
            r
        })
        .collect();
    Inventory::new(records)
}

/// A point read from a source CSV that needs `id,lat,lon` columns; every
/// other column lands in `attributes`.
#[derive(Clone, Debug, PartialEq)]
pub struct SourcePoint {
    pub id: String,
    pub point: GeoPoint,
    pub attributes: BTreeMap<String, String>,
}

pub fn read_points<R: Read>(reader: R) -> Result<Vec<SourcePoint>, GeoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| GeoError::Csv { line: 1, message: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| GeoError::Csv { line: 1, message: format!("missing column `{name}`") })
    };
    let (ci, clat, clon) = (col("id")?, col("lat")?, col("lon")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let bad = |message: String| GeoError::Csv { line, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |c: usize, what: &str| -> Result<f64, GeoError> {
            rec[c].trim().parse::<f64>().map_err(|e| bad(format!("{what} `{}`: {e}", &rec[c])))
        };
        let point = GeoPoint::new(num(clat, "lat")?, num(clon, "lon")?).map_err(|e| bad(e.to_string()))?;
        let attributes = headers
            .iter()
            .enumerate()
            .filter(|(c, _)| ![ci, clat, clon].contains(c))
            .map(|(c, h)| (h.clone(), rec[c].to_string()))
            .collect();
        out.push(SourcePoint { id: rec[ci].trim().to_string(), point, attributes });
    }
    Ok(out)
}

pub fn read_points_file(path: &Path) -> Result<Vec<SourcePoint>, GeoError> {
    let file = std::fs::File::open(path).map_err(|e| GeoError::io(path, e))?;
    read_points(std::io::BufReader::new(file)).map_err(|e| e.in_file(path))
}
