//! Per-sample predictions of a fold's four models and the rates derived
//! from them.

use serde::{Deserialize, Serialize};

use super::{PipelineError, Sample, TwoStagePipeline};
use crate::net::{argmax_first, Checkpoint, ClutterLabel, CoarseLabel, ModelKind};
use crate::stats::report::{stage_row_keys, RowClass, StageModel};
use crate::stats::{rate_where, ClassRate, PairedOutcome};

/// The four models trained on one fold.
#[derive(Clone, Debug)]
pub struct FoldModels {
    pub fold: usize,
    pub pipeline: TwoStagePipeline,
    pub single: Checkpoint,
}

impl FoldModels {
    pub fn new(fold: usize, stage1: Checkpoint, tree: Checkpoint, building: Checkpoint, single: Checkpoint) -> Result<Self, PipelineError> {
        if single.kind() != ModelKind::SingleStage {
            return Err(PipelineError::Config(format!("expected a single_stage checkpoint, got {}", single.kind())));
        }
        Ok(Self { fold, pipeline: TwoStagePipeline::new(stage1, tree, building)?, single })
    }

    pub fn checkpoint(&self, kind: ModelKind) -> &Checkpoint {
        match kind {
            ModelKind::Stage1 => self.pipeline.stage1(),
            ModelKind::Stage2Tree => self.pipeline.tree(),
            ModelKind::Stage2Building => self.pipeline.building(),
            ModelKind::SingleStage => &self.single,
        }
    }
}

/// Raw class probabilities of every model for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutputs {
    pub stage1: Vec<f32>,
    pub tree: Vec<f32>,
    pub building: Vec<f32>,
    pub single: Vec<f32>,
}

impl ModelOutputs {
    pub fn stage1_label(&self) -> CoarseLabel {
        CoarseLabel::ALL[argmax_first(&self.stage1)]
    }

    /// Probabilities of the specialist for `coarse`.
    pub fn stage2(&self, coarse: CoarseLabel) -> Option<&[f32]> {
        match coarse {
            CoarseLabel::Tree => Some(&self.tree),
            CoarseLabel::Building => Some(&self.building),
            CoarseLabel::Other => None,
        }
    }

    /// Specialist decision for `coarse`, with its probability.
    pub fn stage2_label(&self, coarse: CoarseLabel) -> Option<(ClutterLabel, f64)> {
        let p = self.stage2(coarse)?;
        let j = argmax_first(p);
        Some((coarse.fine()[j], p[j] as f64))
    }

    /// Routed two-stage label and path probability.
    pub fn two_stage(&self) -> (ClutterLabel, f64) {
        let c = self.stage1_label();
        let p1 = self.stage1[c.index()] as f64;
        match self.stage2_label(c) {
            Some((l, p2)) => (l, p1 * p2),
            None => (ClutterLabel::Other, p1),
        }
    }

    pub fn single_stage(&self) -> (ClutterLabel, f64) {
        let j = argmax_first(&self.single);
        (ClutterLabel::ALL[j], self.single[j] as f64)
    }
}

/// Run all four models of a fold over `samples`.
pub fn model_outputs(models: &FoldModels, samples: &[&Sample]) -> Result<Vec<ModelOutputs>, PipelineError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let images: Vec<_> = chunk.iter().map(|s| s.image.as_ref()).collect();
        let p1 = models.pipeline.stage1().predict_batch(&images)?;
        let pt = models.pipeline.tree().predict_batch(&images)?;
        let pb = models.pipeline.building().predict_batch(&images)?;
        let ps = models.single.predict_batch(&images)?;
        for (((stage1, tree), building), single) in p1.into_iter().zip(pt).zip(pb).zip(ps) {
            out.push(ModelOutputs { stage1, tree, building, single });
        }
    }
    Ok(out)
}

/// Decisions for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub id: String,
    pub truth: ClutterLabel,
    pub stage1: CoarseLabel,
    /// The specialist for the true coarse class, applied regardless of
    /// routing; `None` for Other.
    pub stage2_own: Option<ClutterLabel>,
    pub two_stage: ClutterLabel,
    pub single_stage: ClutterLabel,
}

impl SampleOutcome {
    pub fn from_outputs(sample: &Sample, o: &ModelOutputs) -> Self {
        Self {
            id: sample.id.clone(),
            truth: sample.label,
            stage1: o.stage1_label(),
            stage2_own: o.stage2_label(sample.label.coarse()).map(|x| x.0),
            two_stage: o.two_stage().0,
            single_stage: o.single_stage().0,
        }
    }

    /// Correct for the two-stage method: both stages right.
    pub fn two_stage_correct(&self) -> bool {
        self.two_stage == self.truth
    }

    pub fn paired(&self) -> PairedOutcome<ClutterLabel> {
        PairedOutcome {
            truth: self.truth,
            two_stage_correct: self.two_stage_correct(),
            single_stage_correct: self.single_stage == self.truth,
        }
    }
}

/// Rate for one per-stage table row.
pub fn stage_rate(outcomes: &[SampleOutcome], class: RowClass, model: StageModel) -> Option<ClassRate> {
    match (class, model) {
        (RowClass::Coarse(c), _) => rate_where(outcomes, |o| o.truth.coarse() == c, |o| o.stage1 == c),
        (RowClass::Fine(f), StageModel::Stage1) => rate_where(outcomes, |o| o.truth == f, |o| o.stage1 == f.coarse()),
        (RowClass::Fine(f), _) => rate_where(outcomes, |o| o.truth == f, |o| o.stage2_own == Some(f)),
    }
}

/// All eleven per-stage rows.
pub fn stage_rates(outcomes: &[SampleOutcome]) -> Vec<(RowClass, StageModel, Option<ClassRate>)> {
    stage_row_keys().into_iter().map(|(c, m)| (c, m, stage_rate(outcomes, c, m))).collect()
}

pub fn single_stage_rate(outcomes: &[SampleOutcome], class: ClutterLabel) -> Option<ClassRate> {
    rate_where(outcomes, |o| o.truth == class, |o| o.single_stage == class)
}

pub fn two_stage_rate(outcomes: &[SampleOutcome], class: ClutterLabel) -> Option<ClassRate> {
    rate_where(outcomes, |o| o.truth == class, |o| o.two_stage == class)
}
