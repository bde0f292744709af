//! The run configuration document.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clutter::geo::{CleanConfig, ImageProvider, LocalDirProvider, UrlProviderConfig, UrlTemplateProvider};
use clutter::net::{ModelKind, NetConfig};
use clutter::pipeline::{CvConfig, DirectionPolicy, SynthCityConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// Where samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// An inventory CSV and a (cleaned) manifest CSV. Relative image paths
    /// in the manifest are taken relative to the manifest.
    Files { inventory: PathBuf, manifest: PathBuf },
    /// A procedurally generated city.
    Synth(SynthCityConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    /// Images named `<id>.png|jpg` in a directory.
    LocalDir { dir: PathBuf },
    /// HTTP GET of a URL template; the key is read from `api_key_env`.
    UrlTemplate(UrlProviderConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvSettings {
    pub k: usize,
    pub kmeans_max_iters: usize,
    pub train: TrainConfig,
    pub net: NetConfig,
}

impl Default for CvSettings {
    fn default() -> Self {
        let d = CvConfig::default();
        Self { k: d.k, kmeans_max_iters: d.kmeans_max_iters, train: d.train, net: d.net }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root of every random stream.
    pub seed: u64,
    pub dataset: Option<DatasetSource>,
    /// Independent test set for the ensemble evaluation.
    pub independent: Option<DatasetSource>,
    pub provider: Option<ProviderConfig>,
    /// Side of fetched images in pixels.
    pub fetch_image_side: usize,
    pub fetch_parallelism: usize,
    pub cleaning: CleanConfig,
    /// Building points further than this from every footprint go to review.
    pub max_join_distance_m: f64,
    pub cv: CvSettings,
    pub direction_policy: DirectionPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: None,
            independent: None,
            provider: None,
            fetch_image_side: clutter::geo::IMAGE_SIDE,
            fetch_parallelism: 4,
            cleaning: CleanConfig::default(),
            max_join_distance_m: 10.0,
            cv: CvSettings::default(),
            direction_policy: DirectionPolicy::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn rebase_source(base: &Path, s: &mut DatasetSource) {
    if let DatasetSource::Files { inventory, manifest } = s {
        rebase(base, inventory);
        rebase(base, manifest);
    }
}

impl RunConfig {
    /// Read a configuration; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for s in [&mut cfg.dataset, &mut cfg.independent].into_iter().flatten() {
            rebase_source(base, s);
        }
        if let Some(ProviderConfig::LocalDir { dir }) = &mut cfg.provider {
            rebase(base, dir);
        }
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn cv_config(&self, parallel: bool) -> CvConfig {
        CvConfig {
            k: self.cv.k,
            seed: self.seed,
            kmeans_max_iters: self.cv.kmeans_max_iters,
            train: self.cv.train.clone(),
            net: self.cv.net.clone(),
            parallel_folds: parallel,
        }
    }

    pub fn net_for(&self, kind: ModelKind) -> NetConfig {
        NetConfig { head: kind.head(), ..self.cv.net.clone() }
    }

    pub fn provider(&self) -> Result<Box<dyn ImageProvider>> {
        match &self.provider {
            None => bail!("the configuration has no `provider` section"),
            Some(ProviderConfig::LocalDir { dir }) => Ok(Box::new(LocalDirProvider::new(dir.clone()))),
            Some(ProviderConfig::UrlTemplate(c)) => Ok(Box::new(UrlTemplateProvider::new(c)?)),
        }
    }
}
