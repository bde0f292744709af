//! Result documents written by `cross-validate` and `test-ensemble` and
//! read back by `report`.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use clutter::net::ModelKind;
use clutter::pipeline::{CvResults, EpochLog, IndependentEvaluation, SampleOutcome, SkippedFold};
use clutter::stats::report::{CombinedRow, StageRow};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const CV_RESULTS: &str = "cv_results.json";
pub const INDEPENDENT_RESULTS: &str = "independent_results.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub test_fraction: f64,
    pub test_fraction_in_advisory_band: bool,
    pub logs: BTreeMap<ModelKind, Vec<EpochLog>>,
    pub outcomes: Vec<SampleOutcome>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvSummary {
    pub cluster_sizes: Vec<usize>,
    pub kmeans_iterations: usize,
    pub folds: Vec<FoldSummary>,
    pub skipped: Vec<SkippedFold>,
    pub stage_rows: Vec<StageRow>,
    pub combined_rows: Vec<CombinedRow>,
}

impl CvSummary {
    pub fn from_results(cv: &CvResults) -> Self {
        Self {
            cluster_sizes: cv.assignment.cluster_sizes(),
            kmeans_iterations: cv.assignment.iterations,
            folds: cv
                .folds
                .iter()
                .map(|f| FoldSummary {
                    fold: f.plan.fold,
                    train: f.plan.train.len(),
                    validation: f.plan.validation.len(),
                    test: f.plan.test.len(),
                    test_fraction: f.plan.test_fraction,
                    test_fraction_in_advisory_band: f.plan.test_fraction_in_advisory_band(),
                    logs: f.logs.clone(),
                    outcomes: f.outcomes.clone(),
                })
                .collect(),
            skipped: cv.skipped.clone(),
            stage_rows: cv.stage_rows(),
            combined_rows: cv.combined_rows(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value)?;
    clutter::io::write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_optional<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if path.exists() {
        read_json(path).map(Some)
    } else {
        Ok(None)
    }
}

pub type IndependentResults = IndependentEvaluation;
