use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::net::{argmax_first, Checkpoint, ClutterLabel, CoarseLabel, ModelKind};
use crate::nn::Tensor;

/// Stage-1 router plus the two stage-2 specialists.
#[derive(Clone, Debug)]
pub struct TwoStagePipeline {
    stage1: Checkpoint,
    tree: Checkpoint,
    building: Checkpoint,
}

/// Probabilities seen on the way to a two-stage decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage1: CoarseLabel,
    pub stage1_probabilities: Vec<f32>,
    /// `None` when stage 1 said Other.
    pub stage2_probabilities: Option<Vec<f32>>,
    pub label: ClutterLabel,
    /// Probability of the whole path: stage-1 times stage-2 probability.
    pub confidence: f64,
}

impl TwoStagePipeline {
    pub fn new(stage1: Checkpoint, tree: Checkpoint, building: Checkpoint) -> Result<Self, PipelineError> {
        for (ck, want) in [(&stage1, ModelKind::Stage1), (&tree, ModelKind::Stage2Tree), (&building, ModelKind::Stage2Building)] {
            if ck.kind() != want || ck.head() != want.head() {
                return Err(PipelineError::Config(format!("expected a {want} checkpoint, got {}", ck.kind())));
            }
        }
        Ok(Self { stage1, tree, building })
    }

    pub fn stage1(&self) -> &Checkpoint {
        &self.stage1
    }

    pub fn tree(&self) -> &Checkpoint {
        &self.tree
    }

    pub fn building(&self) -> &Checkpoint {
        &self.building
    }

    /// Specialist for a coarse class.
    pub fn stage2(&self, coarse: CoarseLabel) -> Option<&Checkpoint> {
        match coarse {
            CoarseLabel::Tree => Some(&self.tree),
            CoarseLabel::Building => Some(&self.building),
            CoarseLabel::Other => None,
        }
    }

    pub fn classify(&self, image: &Tensor<f32>) -> Result<StageTrace, PipelineError> {
        let p1 = self.stage1.predict(image)?;
        let coarse = CoarseLabel::from_index(argmax_first(&p1)).expect("three stage-1 outputs");
        let c1 = p1[coarse.index()] as f64;
        let Some(model) = self.stage2(coarse) else {
            return Ok(StageTrace {
                stage1: coarse,
                stage1_probabilities: p1,
                stage2_probabilities: None,
                label: ClutterLabel::Other,
                confidence: c1,
            });
        };
        let p2 = model.predict(image)?;
        let j = argmax_first(&p2);
        Ok(StageTrace {
            stage1: coarse,
            label: coarse.fine()[j],
            confidence: c1 * p2[j] as f64,
            stage1_probabilities: p1,
            stage2_probabilities: Some(p2),
        })
    }
}

/// One member's ballot: its label and the probability it gave that label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vote<L> {
    pub label: L,
    pub probability: f64,
}

/// Mode of the votes. Ties go to the label with the highest mean
/// probability among its own voters, then to the earliest label in `order`.
/// The result does not depend on the order of `votes`.
pub fn ensemble_vote<L: Copy + PartialEq>(votes: &[Vote<L>], order: &[L]) -> Option<L> {
    let mut best: Option<(L, usize, f64, usize)> = None;
    for (rank, &label) in order.iter().enumerate() {
        let mut probs: Vec<f64> = votes.iter().filter(|v| v.label == label).map(|v| v.probability).collect();
        if probs.is_empty() {
            continue;
        }
        // sorted so the sum is independent of voter order
        probs.sort_by(f64::total_cmp);
        let mean = probs.iter().sum::<f64>() / probs.len() as f64;
        let cand = (label, probs.len(), mean, rank);
        best = match best {
            None => Some(cand),
            Some(b) => {
                let better = match cand.1.cmp(&b.1) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => cand.2 > b.2,
                };
                Some(if better { cand } else { b })
            }
        };
    }
    best.map(|b| b.0)
}

/// Members of one kind, voting on final 5-class labels.
#[derive(Clone, Debug)]
pub enum Ensemble {
    TwoStage(Vec<TwoStagePipeline>),
    SingleStage(Vec<Checkpoint>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDecision {
    pub label: ClutterLabel,
    pub votes: Vec<Vote<ClutterLabel>>,
    /// Per-member traces for two-stage ensembles.
    pub traces: Vec<StageTrace>,
}

impl Ensemble {
    pub fn two_stage(members: Vec<TwoStagePipeline>) -> Result<Self, PipelineError> {
        if members.is_empty() {
            return Err(PipelineError::Config("ensemble needs at least one member".into()));
        }
        Ok(Ensemble::TwoStage(members))
    }

    pub fn single_stage(members: Vec<Checkpoint>) -> Result<Self, PipelineError> {
        if members.is_empty() {
            return Err(PipelineError::Config("ensemble needs at least one member".into()));
        }
        if let Some(m) = members.iter().find(|m| m.kind() != ModelKind::SingleStage) {
            return Err(PipelineError::Config(format!("single-stage ensemble given a {} checkpoint", m.kind())));
        }
        Ok(Ensemble::SingleStage(members))
    }

    pub fn len(&self) -> usize {
        match self {
            Ensemble::TwoStage(m) => m.len(),
            Ensemble::SingleStage(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_side(&self) -> usize {
        match self {
            Ensemble::TwoStage(m) => m[0].stage1().config().input_side,
            Ensemble::SingleStage(m) => m[0].config().input_side,
        }
    }

    pub fn classify(&self, image: &Tensor<f32>) -> Result<EnsembleDecision, PipelineError> {
        let (votes, traces) = match self {
            Ensemble::TwoStage(members) => {
                let traces = members.iter().map(|m| m.classify(image)).collect::<Result<Vec<_>, _>>()?;
                (traces.iter().map(|t| Vote { label: t.label, probability: t.confidence }).collect::<Vec<_>>(), traces)
            }
            Ensemble::SingleStage(members) => {
                let mut votes = Vec::with_capacity(members.len());
                for m in members {
                    let p = m.predict(image)?;
                    let j = argmax_first(&p);
                    votes.push(Vote { label: ClutterLabel::ALL[j], probability: p[j] as f64 });
                }
                (votes, Vec::new())
            }
        };
        let label = ensemble_vote(&votes, &ClutterLabel::ALL).expect("nonempty ensemble");
        Ok(EnsembleDecision { label, votes, traces })
    }
}
