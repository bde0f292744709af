use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GeoError;

pub const MANIFEST_HEADER: [&str; 6] = ["id", "image_path", "byte_size", "fetched_at", "status", "reason"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Kept,
    Dropped,
    FetchFailed,
    Invalid,
}

impl SampleStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleStatus::Kept => "kept",
            SampleStatus::Dropped => "dropped",
            SampleStatus::FetchFailed => "fetch_failed",
            SampleStatus::Invalid => "invalid",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [SampleStatus::Kept, SampleStatus::Dropped, SampleStatus::FetchFailed, SampleStatus::Invalid]
            .into_iter()
            .find(|v| v.as_str() == s)
    }
}

/// Cleaning drop reasons, in the priority used when several apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DropReason {
    LowDetail,
    DetectorMismatch,
    ClassCollision,
}

impl DropReason {
    pub const ALL: [DropReason; 3] = [DropReason::LowDetail, DropReason::DetectorMismatch, DropReason::ClassCollision];

    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::LowDetail => "low-detail image",
            DropReason::DetectorMismatch => "detector mismatch",
            DropReason::ClassCollision => "class collision",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: Option<PathBuf>,
    pub byte_size: Option<u64>,
    pub fetched_at: Option<String>,
    pub status: SampleStatus,
    pub reason: Option<String>,
}

impl ManifestEntry {
    pub fn is_kept(&self) -> bool {
        self.status == SampleStatus::Kept
    }

    pub fn drop_reason(&self) -> Option<DropReason> {
        if self.status == SampleStatus::Dropped {
            self.reason.as_deref().and_then(DropReason::parse)
        } else {
            None
        }
    }

    /// Drop a kept entry; entries already out keep their first reason.
    pub fn drop_for(&mut self, reason: DropReason) {
        if self.is_kept() {
            self.status = SampleStatus::Dropped;
            self.reason = Some(reason.as_str().to_string());
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub entries: Vec<ManifestEntry>,
}

impl SampleManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Self { entries }
    }

    pub fn kept(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.is_kept())
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Dropped counts per reason, all reasons listed.
    pub fn drop_counts(&self) -> Vec<(DropReason, usize)> {
        DropReason::ALL
            .iter()
            .map(|&r| (r, self.entries.iter().filter(|e| e.drop_reason() == Some(r)).count()))
            .collect()
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, GeoError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| GeoError::Csv { line: 1, message: e.to_string() })?.clone();
        if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
            return Err(GeoError::Csv { line: 1, message: format!("expected header {}", MANIFEST_HEADER.join(",")) });
        }
        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let bad = |message: String| GeoError::Csv { line, message };
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let opt = |s: &str| if s.is_empty() { None } else { Some(s.to_string()) };
            let byte_size = match &rec[2] {
                "" => None,
                s => Some(s.parse::<u64>().map_err(|e| bad(format!("byte_size `{s}`: {e}")))?),
            };
            let status = SampleStatus::parse(&rec[4]).ok_or_else(|| bad(format!("unknown status `{}`", &rec[4])))?;
            entries.push(ManifestEntry {
                id: rec[0].to_string(),
                image_path: opt(&rec[1]).map(PathBuf::from),
                byte_size,
                fetched_at: opt(&rec[3]),
                status,
                reason: opt(&rec[5]),
            });
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self, GeoError> {
        let f = std::fs::File::open(path).map_err(|e| GeoError::io(path, e))?;
        Self::from_reader(std::io::BufReader::new(f)).map_err(|e| e.in_file(path))
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<(), GeoError> {
        let err = |e: csv::Error| GeoError::Csv { line: 0, message: e.to_string() };
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(MANIFEST_HEADER).map_err(err)?;
        for e in &self.entries {
            let path = e.image_path.as_ref().map(|p| p.to_string_lossy().into_owned()).unwrap_or_default();
            let size = e.byte_size.map(|s| s.to_string()).unwrap_or_default();
            w.write_record([
                e.id.as_str(),
                &path,
                &size,
                e.fetched_at.as_deref().unwrap_or(""),
                e.status.as_str(),
                e.reason.as_deref().unwrap_or(""),
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
}
