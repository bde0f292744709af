//! Geographic cross-validation, training, two-stage routing, ensemble
//! voting, independent evaluation and clutter-map rasterization.

mod checkpoints;
mod cv;
mod dataset;
mod ensemble;
mod evaluate;
mod folds;
mod kmeans;
mod outcome;
pub mod raster;
mod seeds;
pub mod synth;
mod train;

pub use checkpoints::{checkpoint_file_name, load_fold_models, save_fold_models};
pub use cv::{cross_validate, plan_folds, run_fold, CvConfig, CvResults, FoldResult, SkippedFold};
pub use dataset::{Dataset, Sample};
pub use ensemble::{ensemble_vote, Ensemble, EnsembleDecision, StageTrace, TwoStagePipeline, Vote};
pub use evaluate::{evaluate_independent, DirectionPolicy, IndependentEvaluation, SampleVotes};
pub use folds::{make_folds, FoldPlan, ADVISORY_TEST_FRACTION, VALIDATION_FRACTION};
pub use kmeans::{kmeans_geo, nearest, ClusterAssignment};
pub use outcome::{
    model_outputs, single_stage_rate, stage_rate, stage_rates, two_stage_rate, FoldModels, ModelOutputs,
    SampleOutcome,
};
pub use raster::{classify_grid, BoundingBox, LabeledRaster};
pub use seeds::derive_seed;
pub use synth::{synth_city, synth_dataset, synth_image, SynthCityConfig, TextureProvider};
pub use train::{train_model, Augmentation, EpochLog, TrainConfig, TrainedModel};

use crate::geo::GeoError;
use crate::net::{CheckpointError, ModelKind, NetError};
use crate::nn::NnError;
use crate::stats::StatsError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("{kind}: no training samples of class `{class}`")]
    MissingClass { kind: ModelKind, class: String },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{path}: {source}")]
    Checkpoint { path: String, source: CheckpointError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl From<NnError> for PipelineError {
    fn from(e: NnError) -> Self {
        PipelineError::Net(NetError::Nn(e))
    }
}

impl From<CheckpointError> for PipelineError {
    fn from(e: CheckpointError) -> Self {
        PipelineError::Net(NetError::Checkpoint(e))
    }
}
