use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    derive_seed, kmeans_geo, make_folds, model_outputs, single_stage_rate, stage_rate, train_model, two_stage_rate,
    ClusterAssignment, Dataset, EpochLog, FoldModels, FoldPlan, PipelineError, SampleOutcome, TrainConfig,
};
use crate::geo::{GeoPoint, LocalProjection};
use crate::net::{ClutterLabel, CoarseLabel, ModelKind, NetConfig};
use crate::stats::report::{stage_row_keys, CombinedRow, RowClass, StageModel, StageRow};
use crate::stats::{compose_with_sd, weighted_fold_mean, ClassRate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    pub kmeans_max_iters: usize,
    pub train: TrainConfig,
    /// Architecture shared by all kinds; the head is set per kind.
    pub net: NetConfig,
    /// Train folds concurrently.
    pub parallel_folds: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 0,
            kmeans_max_iters: 300,
            train: TrainConfig::default(),
            net: ModelKind::Stage1.default_config(),
            parallel_folds: true,
        }
    }
}

impl CvConfig {
    pub fn net_for(&self, kind: ModelKind) -> NetConfig {
        NetConfig { head: kind.head(), ..self.net.clone() }
    }
}

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub plan: FoldPlan,
    pub models: FoldModels,
    pub logs: BTreeMap<ModelKind, Vec<EpochLog>>,
    pub outcomes: Vec<SampleOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub fold: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct CvResults {
    pub assignment: ClusterAssignment,
    pub folds: Vec<FoldResult>,
    pub skipped: Vec<SkippedFold>,
}

/// Train and evaluate one fold's four models.
pub fn run_fold(dataset: &Dataset, plan: &FoldPlan, config: &CvConfig) -> Result<FoldResult, PipelineError> {
    let train = dataset.subset(&plan.train);
    let val = dataset.subset(&plan.validation);
    let mut trained = BTreeMap::new();
    let mut logs = BTreeMap::new();
    for kind in ModelKind::ALL {
        let seed = derive_seed(config.seed, kind.as_str(), plan.fold as u64);
        let m = train_model(kind, &train, &val, &config.train, &config.net_for(kind), seed)?;
        log::info!(
            "fold {} {kind}: best epoch {} validation accuracy {:?}",
            plan.fold,
            m.best_epoch,
            m.checkpoint.metadata.final_validation_accuracy
        );
        logs.insert(kind, m.log);
        trained.insert(kind, m.checkpoint);
    }
    let mut take = |k: ModelKind| trained.remove(&k).expect("trained every kind");
    let models = FoldModels::new(
        plan.fold,
        take(ModelKind::Stage1),
        take(ModelKind::Stage2Tree),
        take(ModelKind::Stage2Building),
        take(ModelKind::SingleStage),
    )?;
    let test = dataset.subset(&plan.test);
    let outputs = model_outputs(&models, &test)?;
    let outcomes = test.iter().zip(&outputs).map(|(s, o)| SampleOutcome::from_outputs(s, o)).collect();
    Ok(FoldResult { plan: plan.clone(), models, logs, outcomes })
}

/// Spatial clusters of `points` and the fold plans built from them, exactly
/// as [`cross_validate`] derives them.
pub fn plan_folds(points: &[GeoPoint], config: &CvConfig) -> Result<(ClusterAssignment, Vec<FoldPlan>), PipelineError> {
    let proj = LocalProjection::about_centroid(points)
        .ok_or_else(|| PipelineError::Data("no points to cluster".into()))?;
    let xy: Vec<[f64; 2]> = points.iter().map(|p| proj.project(p)).collect();
    let assignment = kmeans_geo(&xy, config.k, derive_seed(config.seed, "kmeans", 0), config.kmeans_max_iters)?;
    let plans = make_folds(&assignment, derive_seed(config.seed, "folds", 0))?;
    Ok((assignment, plans))
}

/// Geographic k-fold cross-validation of all four model kinds.
pub fn cross_validate(dataset: &Dataset, config: &CvConfig) -> Result<CvResults, PipelineError> {
    if dataset.is_empty() {
        return Err(PipelineError::Data("empty dataset".into()));
    }
    let points: Vec<GeoPoint> = dataset.samples().iter().map(|s| s.point).collect();
    let (assignment, plans) = plan_folds(&points, config)?;
    let run = |p: &FoldPlan| (p.fold, run_fold(dataset, p, config));
    let results: Vec<_> =
        if config.parallel_folds { plans.par_iter().map(run).collect() } else { plans.iter().map(run).collect() };
    let mut folds = Vec::new();
    let mut skipped = Vec::new();
    for (fold, r) in results {
        match r {
            Ok(f) => folds.push(f),
            Err(e @ PipelineError::MissingClass { .. }) => {
                log::warn!("fold {fold} skipped: {e}");
                skipped.push(SkippedFold { fold, reason: e.to_string() });
            }
            Err(e) => return Err(e),
        }
    }
    if folds.is_empty() {
        return Err(PipelineError::Data("every fold was rejected".into()));
    }
    Ok(CvResults { assignment, folds, skipped })
}

fn aggregate(per_fold: &[(Option<ClassRate>, usize)]) -> (Option<f64>, Option<f64>, usize) {
    let (mut values, mut weights, mut n) = (Vec::new(), Vec::new(), 0);
    for (rate, fold_size) in per_fold {
        if let Some(r) = rate {
            values.push(r.tpr);
            weights.push(*fold_size as f64);
            n += r.n;
        }
    }
    match weighted_fold_mean(&values, &weights) {
        Ok((m, s)) => (Some(m), Some(s), n),
        Err(_) => (None, None, 0),
    }
}

impl CvResults {
    fn per_fold<F: Fn(&[SampleOutcome]) -> Option<ClassRate>>(&self, f: F) -> Vec<(Option<ClassRate>, usize)> {
        self.folds.iter().map(|fr| (f(&fr.outcomes), fr.outcomes.len())).collect()
    }

    /// Per-stage rates, fold means weighted by fold test size. Folds where
    /// a class is absent from the test cluster do not count for that class.
    pub fn stage_rows(&self) -> Vec<StageRow> {
        stage_row_keys()
            .into_iter()
            .map(|(class, model)| {
                let (mean, sd, n) = aggregate(&self.per_fold(|o| stage_rate(o, class, model)));
                StageRow { class, model, mean, sd, n }
            })
            .collect()
    }

    /// Two-stage estimates composed from the stage rows, next to the
    /// single-stage fold means.
    pub fn combined_rows(&self) -> Vec<CombinedRow> {
        let stages = self.stage_rows();
        let find = |class: RowClass, model: StageModel| {
            stages.iter().find(|r| r.class == class && r.model == model).and_then(|r| Some((r.mean?, r.sd?)))
        };
        ClutterLabel::ALL
            .iter()
            .map(|&class| {
                let (two_stage, two_stage_sd) = if class == ClutterLabel::Other {
                    find(RowClass::Coarse(CoarseLabel::Other), StageModel::Stage1).unzip()
                } else {
                    let model = if class.is_tree() { StageModel::Tree } else { StageModel::Building };
                    match (find(RowClass::Fine(class), StageModel::Stage1), find(RowClass::Fine(class), model)) {
                        (Some(a), Some(b)) => {
                            let (m, s) = compose_with_sd(&[a, b]);
                            (Some(m), Some(s))
                        }
                        _ => (None, None),
                    }
                };
                let (single_stage, single_stage_sd, _) = aggregate(&self.per_fold(|o| single_stage_rate(o, class)));
                let (measured, _, _) = aggregate(&self.per_fold(|o| two_stage_rate(o, class)));
                CombinedRow { class, two_stage, two_stage_sd, single_stage, single_stage_sd, two_stage_measured: measured }
            })
            .collect()
    }

    pub fn fold_models(&self) -> Vec<FoldModels> {
        self.folds.iter().map(|f| f.models.clone()).collect()
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &SampleOutcome> {
        self.folds.iter().flat_map(|f| &f.outcomes)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::pipeline::{evaluate_independent, synth_dataset, Augmentation, DirectionPolicy, SynthCityConfig};

    pub(crate) fn tiny_city(seed: u64) -> Dataset {
        let cfg = SynthCityConfig { samples_per_class: 12, blobs: 3, image_side: 16, seed, ..Default::default() };
        synth_dataset(&cfg, 16).unwrap()
    }

    pub(crate) fn tiny_cv() -> CvConfig {
        CvConfig {
            k: 3,
            seed: 11,
            train: TrainConfig { epochs: 2, batch_size: 8, augmentation: Augmentation::RandomPerEpoch, ..Default::default() },
            net: NetConfig { input_side: 16, conv_block_channels: vec![4, 4], ..ModelKind::Stage1.default_config() },
            ..Default::default()
        }
    }

    #[test]
    fn folds_cover_dataset_and_are_reproducible() {
        let data = tiny_city(1);
        let cfg = tiny_cv();
        let a = cross_validate(&data, &cfg).unwrap();
        assert_eq!(a.folds.len() + a.skipped.len(), 3);
        let tested: usize = a.folds.iter().map(|f| f.outcomes.len()).sum();
        let skipped: usize = a.skipped.iter().map(|s| a.assignment.cluster_sizes()[s.fold]).sum();
        assert_eq!(tested + skipped, data.len());
        assert_eq!(a.stage_rows().len(), 11);
        let combined = a.combined_rows();
        assert_eq!(combined.len(), 5);
        let other = combined.iter().find(|r| r.class == ClutterLabel::Other).unwrap();
        let s1_other = a.stage_rows().into_iter().find(|r| r.class == RowClass::Coarse(CoarseLabel::Other)).unwrap();
        assert_eq!(other.two_stage, s1_other.mean);
        let b = cross_validate(&data, &CvConfig { parallel_folds: false, ..cfg }).unwrap();
        assert_eq!(a.stage_rows(), b.stage_rows());
    }

    #[test]
    fn independent_evaluation_shapes() {
        let cv = cross_validate(&tiny_city(1), &tiny_cv()).unwrap();
        let test = tiny_city(99);
        let refs: Vec<&crate::pipeline::Sample> = test.samples().iter().collect();
        let ev = evaluate_independent(&cv.fold_models(), &refs, DirectionPolicy::FollowObserved).unwrap();
        assert_eq!(ev.outcomes.len(), test.len());
        assert_eq!(ev.stages.len(), 11);
        for row in &ev.combined {
            assert_eq!(row.contingency.total() as usize, 12);
            let p = row.p_value.unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
        for v in &ev.votes {
            assert_eq!(v.two_stage.len(), cv.folds.len());
        }
    }
}
