//! Ensemble evaluation on an independent test set: majority votes of the
//! fold models, per-stage and combined accuracies, McNemar tests and F1.

use serde::{Deserialize, Serialize};

use super::{
    ensemble_vote, model_outputs, single_stage_rate, stage_rate, two_stage_rate, FoldModels, PipelineError,
    Sample, SampleOutcome, Vote,
};
use crate::net::{ClutterLabel, CoarseLabel};
use crate::stats::report::{stage_row_keys, F1Comparison, IndependentCombinedRow, IndependentStageRow};
use crate::stats::{build_contingency, f1_scores, mcnemar_one_sided, Direction, PairedOutcome};

/// How the alternative hypothesis of each per-class McNemar test is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionPolicy {
    /// Test in the direction of the observed accuracy difference
    /// (two-stage greater when the accuracies are equal).
    #[default]
    FollowObserved,
    /// Always test whether the two-stage method is more accurate.
    AlwaysGreater,
}

/// Member ballots for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleVotes {
    pub id: String,
    pub stage1: Vec<Vote<CoarseLabel>>,
    /// Ballots of the specialist for the true coarse class.
    pub stage2_own: Vec<Vote<ClutterLabel>>,
    pub two_stage: Vec<Vote<ClutterLabel>>,
    pub single_stage: Vec<Vote<ClutterLabel>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependentEvaluation {
    pub outcomes: Vec<SampleOutcome>,
    pub votes: Vec<SampleVotes>,
    pub stages: Vec<IndependentStageRow>,
    pub combined: Vec<IndependentCombinedRow>,
    pub f1: F1Comparison,
}

/// Evaluate the ensemble formed by `members` on `samples`.
pub fn evaluate_independent(
    members: &[FoldModels],
    samples: &[&Sample],
    policy: DirectionPolicy,
) -> Result<IndependentEvaluation, PipelineError> {
    if members.is_empty() {
        return Err(PipelineError::Config("no ensemble members".into()));
    }
    if samples.is_empty() {
        return Err(PipelineError::Data("empty independent test set".into()));
    }
    let per_member: Vec<_> = members.iter().map(|m| model_outputs(m, samples)).collect::<Result<_, _>>()?;
    let mut votes = Vec::with_capacity(samples.len());
    let mut outcomes = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let mut v = SampleVotes {
            id: s.id.clone(),
            stage1: Vec::new(),
            stage2_own: Vec::new(),
            two_stage: Vec::new(),
            single_stage: Vec::new(),
        };
        for outs in &per_member {
            let o = &outs[i];
            let c = o.stage1_label();
            v.stage1.push(Vote { label: c, probability: o.stage1[c.index()] as f64 });
            if let Some((l, p)) = o.stage2_label(s.label.coarse()) {
                v.stage2_own.push(Vote { label: l, probability: p });
            }
            let (l, p) = o.two_stage();
            v.two_stage.push(Vote { label: l, probability: p });
            let (l, p) = o.single_stage();
            v.single_stage.push(Vote { label: l, probability: p });
        }
        let pick = |b: &[Vote<ClutterLabel>]| ensemble_vote(b, &ClutterLabel::ALL);
        outcomes.push(SampleOutcome {
            id: s.id.clone(),
            truth: s.label,
            stage1: ensemble_vote(&v.stage1, &CoarseLabel::ALL).expect("at least one member"),
            stage2_own: pick(&v.stage2_own),
            two_stage: pick(&v.two_stage).expect("at least one member"),
            single_stage: pick(&v.single_stage).expect("at least one member"),
        });
        votes.push(v);
    }

    let stages = stage_row_keys()
        .into_iter()
        .map(|(class, model)| {
            let r = stage_rate(&outcomes, class, model);
            IndependentStageRow { class, model, accuracy: r.map(|r| r.tpr), n: r.map_or(0, |r| r.n) }
        })
        .collect();

    let paired: Vec<PairedOutcome<ClutterLabel>> = outcomes.iter().map(SampleOutcome::paired).collect();
    let combined = ClutterLabel::ALL
        .iter()
        .map(|&class| {
            let two = two_stage_rate(&outcomes, class).map(|r| r.tpr);
            let single = single_stage_rate(&outcomes, class).map(|r| r.tpr);
            let contingency = build_contingency(&paired, class);
            let (p_value, direction) = match (two, single) {
                (Some(a), Some(b)) => {
                    let d = match policy {
                        DirectionPolicy::AlwaysGreater => Direction::Greater,
                        DirectionPolicy::FollowObserved if a < b => Direction::Less,
                        DirectionPolicy::FollowObserved => Direction::Greater,
                    };
                    (Some(mcnemar_one_sided(&contingency, d).p_value), Some(d))
                }
                _ => (None, None),
            };
            IndependentCombinedRow { class, two_stage: two, single_stage: single, p_value, direction, contingency }
        })
        .collect();

    let truths: Vec<ClutterLabel> = outcomes.iter().map(|o| o.truth).collect();
    let two: Vec<ClutterLabel> = outcomes.iter().map(|o| o.two_stage).collect();
    let single: Vec<ClutterLabel> = outcomes.iter().map(|o| o.single_stage).collect();
    let f1 = F1Comparison {
        two_stage: f1_scores(&two, &truths, &ClutterLabel::ALL)?,
        single_stage: f1_scores(&single, &truths, &ClutterLabel::ALL)?,
    };
    Ok(IndependentEvaluation { outcomes, votes, stages, combined, f1 })
}
