//! A directory of per-fold checkpoints, `fold{i}_{kind}.cltr`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{FoldModels, PipelineError};
use crate::net::{Checkpoint, ModelKind};

pub fn checkpoint_file_name(fold: usize, kind: ModelKind) -> String {
    format!("fold{fold}_{}.cltr", kind.as_str())
}

fn ck_err(path: &Path) -> impl Fn(crate::net::CheckpointError) -> PipelineError + '_ {
    move |source| PipelineError::Checkpoint { path: path.display().to_string(), source }
}

/// Write every model of every fold into `dir`; returns the paths written.
pub fn save_fold_models(dir: &Path, folds: &[FoldModels]) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.display().to_string(), source })?;
    let mut written = Vec::new();
    for f in folds {
        for kind in ModelKind::ALL {
            let path = dir.join(checkpoint_file_name(f.fold, kind));
            f.checkpoint(kind).save(&path).map_err(ck_err(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

fn parse_name(name: &str) -> Option<(usize, ModelKind)> {
    let stem = name.strip_suffix(".cltr")?.strip_prefix("fold")?;
    let (fold, kind) = stem.split_once('_')?;
    let kind = ModelKind::ALL.into_iter().find(|k| k.as_str() == kind)?;
    Some((fold.parse().ok()?, kind))
}

/// Load every complete fold in `dir`, ordered by fold index. A fold with
/// a missing model is an error.
pub fn load_fold_models(dir: &Path) -> Result<Vec<FoldModels>, PipelineError> {
    let io = |source| PipelineError::Io { path: dir.display().to_string(), source };
    let mut found: BTreeMap<usize, BTreeMap<ModelKind, PathBuf>> = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let entry = entry.map_err(io)?;
        if let Some((fold, kind)) = entry.file_name().to_str().and_then(parse_name) {
            found.entry(fold).or_default().insert(kind, entry.path());
        }
    }
    if found.is_empty() {
        return Err(PipelineError::Data(format!("no fold checkpoints in {}", dir.display())));
    }
    let mut out = Vec::new();
    for (fold, mut paths) in found {
        let mut load = |kind: ModelKind| -> Result<Checkpoint, PipelineError> {
            let path = paths
                .remove(&kind)
                .ok_or_else(|| PipelineError::Data(format!("fold {fold}: missing {}", checkpoint_file_name(fold, kind))))?;
            Checkpoint::load(&path).map_err(ck_err(&path))
        };
        let s1 = load(ModelKind::Stage1)?;
        let tree = load(ModelKind::Stage2Tree)?;
        let bld = load(ModelKind::Stage2Building)?;
        let single = load(ModelKind::SingleStage)?;
        out.push(FoldModels::new(fold, s1, tree, bld, single)?);
    }
    Ok(out)
}
