//! Exact Bayesian inversion of a forward table.
//!
//! For an observed ⟨given mental state, state, action⟩ the posterior over the
//! hidden mental state `m` is proportional to `F(m, given, state)[action] * prior(m)`.
//! The latent spaces are tiny (9 beliefs, 3 desires, 27 pairs) so every
//! posterior is computed by enumeration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::FiniteDistribution;
use crate::table::{ForwardTable, InferenceTable, SlotKind};
use crate::world::{
    enumerate_inference_tuples, Attitude, BeliefState, DesireState, DomainId, ForwardTuple, InferenceTask,
    InferenceTuple,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InversionError {
    #[error("prior has {got} entries but the {task} latent space has {expected}")]
    PriorMismatch { task: InferenceTask, expected: usize, got: usize },
    #[error("tuple is a {got} query but {expected} was requested")]
    TaskMismatch { expected: InferenceTask, got: InferenceTask },
}

/// One candidate value of the hidden mental state(s).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Latent {
    pub beliefs: Option<BeliefState>,
    pub desires: Option<DesireState>,
}

impl Latent {
    /// Fill the hidden parts of an inference tuple to get the forward query it implies.
    pub fn complete(&self, tuple: &InferenceTuple) -> ForwardTuple {
        ForwardTuple {
            beliefs: self.beliefs.or(tuple.given_beliefs).expect("beliefs given or latent"),
            desires: self.desires.or(tuple.given_desires).expect("desires given or latent"),
            state: tuple.state,
        }
    }
}

/// The hidden states of a task, in canonical order (beliefs major for joint).
pub fn latent_space(task: InferenceTask) -> Vec<Latent> {
    match task {
        InferenceTask::BeliefInference => {
            BeliefState::all().map(|b| Latent { beliefs: Some(b), desires: None }).collect()
        }
        InferenceTask::DesireInference => {
            DesireState::ALL.into_iter().map(|d| Latent { beliefs: None, desires: Some(d) }).collect()
        }
        InferenceTask::JointInference => BeliefState::all()
            .flat_map(|b| DesireState::ALL.into_iter().map(move |d| Latent { beliefs: Some(b), desires: Some(d) }))
            .collect(),
    }
}

/// Uniform over admissible latents.
pub fn uniform_prior(task: InferenceTask) -> FiniteDistribution {
    FiniteDistribution::uniform(latent_space(task).len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointPosterior {
    pub task: InferenceTask,
    pub probs: FiniteDistribution,
    /// No latent assigns the observed action positive probability; `probs` is the prior.
    pub zero_evidence: bool,
}

pub fn invert(
    forward: &ForwardTable,
    tuple: &InferenceTuple,
    prior: &FiniteDistribution,
) -> Result<JointPosterior, InversionError> {
    let latents = latent_space(tuple.task);
    if prior.len() != latents.len() {
        return Err(InversionError::PriorMismatch { task: tuple.task, expected: latents.len(), got: prior.len() });
    }
    let action = tuple.action.index();
    let weights: Vec<f64> = latents
        .iter()
        .zip(prior.probs())
        .map(|(m, p)| forward.get(&m.complete(tuple)).prob(action) * p)
        .collect();
    match FiniteDistribution::from_weights(weights) {
        Ok(probs) => Ok(JointPosterior { task: tuple.task, probs, zero_evidence: false }),
        Err(_) => Ok(JointPosterior { task: tuple.task, probs: prior.clone(), zero_evidence: true }),
    }
}

/// Per-slot marginals of a joint posterior, in [`SlotKind::for_task`] order.
pub fn marginalize(joint: &JointPosterior) -> Vec<FiniteDistribution> {
    let latents = latent_space(joint.task);
    let slots = SlotKind::for_task(crate::world::Task::Inference(joint.task));
    slots
        .iter()
        .map(|&slot| {
            let mut acc = vec![0.0; slot.support_size()];
            for (m, p) in latents.iter().zip(joint.probs.probs()) {
                acc[slot_value(m, slot)] += p;
            }
            FiniteDistribution::from_weights(acc).expect("joint posterior has mass")
        })
        .collect()
}

/// Index of a latent's value within a slot's support.
pub fn slot_value(latent: &Latent, slot: SlotKind) -> usize {
    let attitude = |a: Attitude| a.index();
    match slot {
        SlotKind::NearContent => latent.beliefs.expect("belief slot").0.near.index(),
        SlotKind::FarContent => latent.beliefs.expect("belief slot").0.far.index(),
        SlotKind::Item1Attitude => attitude(latent.desires.expect("desire slot").item1()),
        SlotKind::Item2Attitude => attitude(latent.desires.expect("desire slot").item2()),
        SlotKind::Action => panic!("action is never latent"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorRow {
    pub tuple: InferenceTuple,
    pub joint: JointPosterior,
    pub marginals: Vec<FiniteDistribution>,
}

/// Expected posteriors for every inference tuple of a task.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    pub domain: DomainId,
    pub task: InferenceTask,
    pub provenance: String,
    pub rows: Vec<PosteriorRow>,
}

impl PosteriorTable {
    pub fn zero_evidence_count(&self) -> usize {
        self.rows.iter().filter(|r| r.joint.zero_evidence).count()
    }

    /// The marginals as a table of direct-inference shape.
    pub fn to_inference_table(&self) -> InferenceTable {
        let mut rows = self.rows.iter();
        InferenceTable::from_fn(self.domain, self.task, self.provenance.clone(), |t| {
            let row = rows.next().expect("one row per tuple");
            debug_assert_eq!(&row.tuple, t);
            row.marginals.clone()
        })
    }

    pub fn records(&self) -> Vec<PosteriorRecord> {
        self.rows
            .iter()
            .map(|r| PosteriorRecord {
                tuple_key: r.tuple.key(self.domain),
                task: self.task,
                marginals: SlotKind::for_task(crate::world::Task::Inference(self.task))
                    .iter()
                    .zip(&r.marginals)
                    .map(|(s, d)| (s.name().to_string(), d.probs().to_vec()))
                    .collect(),
                joint: Some(r.joint.probs.probs().to_vec()),
                zero_evidence: r.joint.zero_evidence,
            })
            .collect()
    }
}

/// JSONL row shared by posterior tables and extracted inference tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRecord {
    pub tuple_key: String,
    pub task: InferenceTask,
    pub marginals: Vec<(String, Vec<f64>)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub joint: Option<Vec<f64>>,
    pub zero_evidence: bool,
}

pub fn posterior_table(
    forward: &ForwardTable,
    domain: DomainId,
    task: InferenceTask,
) -> Result<PosteriorTable, InversionError> {
    let prior = uniform_prior(task);
    let rows = enumerate_inference_tuples(domain, task)
        .into_iter()
        .map(|tuple| {
            let joint = invert(forward, &tuple, &prior)?;
            let marginals = marginalize(&joint);
            Ok(PosteriorRow { tuple, joint, marginals })
        })
        .collect::<Result<_, InversionError>>()?;
    Ok(PosteriorTable { domain, task, provenance: format!("posterior({})", forward.provenance()), rows })
}
