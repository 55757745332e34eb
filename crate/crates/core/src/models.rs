//! Rule-based rational-agent models.
//!
//! Each model scores the two actions by reward minus cost and predicts the
//! uniform distribution over the best-scoring actions. Ablations drop the
//! character's beliefs (substituting the true state), their desires, or the
//! cost of walking to the far location.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::FiniteDistribution;
use crate::table::{ActionDist, ForwardTable};
use crate::world::{Action, Content, Contents, DesireState, DomainId, ForwardTuple};

/// Utilities closer than this are tied.
const UTILITY_TIE: f64 = 1e-12;

pub const DEFAULT_FAR_COST: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model {name}: far_cost must lie strictly between 0 and 1 when cost is used, got {far_cost}")]
    BadCost { name: String, far_cost: f64 },
    #[error("model {0}: a desire-sensitive model needs a belief source")]
    MissingBeliefSource(String),
    #[error("unknown candidate model {0:?}")]
    UnknownModel(String),
}

/// Where a model reads location contents from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefSource {
    /// The character's own beliefs.
    Subjective,
    /// The true world state.
    Omniscient,
    /// Contents are ignored.
    None,
}

fn default_far_cost() -> f64 {
    DEFAULT_FAR_COST
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateModelSpec {
    pub name: String,
    pub belief_source: BeliefSource,
    pub use_desires: bool,
    pub use_cost: bool,
    #[serde(default = "default_far_cost")]
    pub far_cost: f64,
}

impl CandidateModelSpec {
    pub fn new(name: &str, belief_source: BeliefSource, use_desires: bool, use_cost: bool) -> Self {
        CandidateModelSpec {
            name: name.to_string(),
            belief_source,
            use_desires,
            use_cost,
            far_cost: DEFAULT_FAR_COST,
        }
    }

    pub fn human_tom() -> Self {
        Self::new("HumanToM", BeliefSource::Subjective, true, true)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.use_cost && !(self.far_cost > 0.0 && self.far_cost < 1.0) {
            return Err(ModelError::BadCost { name: self.name.clone(), far_cost: self.far_cost });
        }
        if self.use_desires && self.belief_source == BeliefSource::None {
            return Err(ModelError::MissingBeliefSource(self.name.clone()));
        }
        Ok(())
    }

    pub fn cost(&self, location: Action) -> f64 {
        match location {
            Action::Near => 0.0,
            Action::Far if self.use_cost => self.far_cost,
            Action::Far => 0.0,
        }
    }

    /// The contents this model reasons about for a tuple.
    pub fn contents_for(&self, tuple: &ForwardTuple) -> Contents {
        match self.belief_source {
            BeliefSource::Subjective | BeliefSource::None => tuple.beliefs.0,
            BeliefSource::Omniscient => tuple.state.0,
        }
    }
}

/// The six default candidates, in report order.
pub fn default_family() -> Vec<CandidateModelSpec> {
    vec![
        CandidateModelSpec::human_tom(),
        CandidateModelSpec::new("BeliefDesire", BeliefSource::Subjective, true, false),
        CandidateModelSpec::new("DesireCost", BeliefSource::Omniscient, true, true),
        CandidateModelSpec::new("Desire", BeliefSource::Omniscient, true, false),
        CandidateModelSpec::new("Cost", BeliefSource::None, false, true),
        CandidateModelSpec::new("Random", BeliefSource::None, false, false),
    ]
}

pub fn family_member(name: &str) -> Result<CandidateModelSpec, ModelError> {
    default_family()
        .into_iter()
        .find(|m| m.name == name)
        .ok_or_else(|| ModelError::UnknownModel(name.to_string()))
}

/// 1 if the location holds at least one liked item, else 0. The character
/// takes a single item, so a second liked item adds nothing.
pub fn expected_reward(content: Content, desires: DesireState) -> f64 {
    let liked = (content.has_item1() && desires.likes_item1()) || (content.has_item2() && desires.likes_item2());
    if liked {
        1.0
    } else {
        0.0
    }
}

/// Reward at `location` minus its cost. Models without desires see no reward.
pub fn utility(location: Action, contents: Contents, desires: DesireState, spec: &CandidateModelSpec) -> f64 {
    let reward = if spec.use_desires { expected_reward(contents.at(location), desires) } else { 0.0 };
    reward - spec.cost(location)
}

pub fn utilities(spec: &CandidateModelSpec, tuple: &ForwardTuple) -> [f64; 2] {
    let contents = spec.contents_for(tuple);
    Action::ALL.map(|a| utility(a, contents, tuple.desires, spec))
}

/// Uniform over the actions with maximal utility.
pub fn argmax_dist(utilities: &[f64]) -> FiniteDistribution {
    let max = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let best: Vec<usize> = (0..utilities.len()).filter(|&i| max - utilities[i] <= UTILITY_TIE).collect();
    FiniteDistribution::uniform_over(utilities.len(), &best)
}

pub fn predict(spec: &CandidateModelSpec, tuple: &ForwardTuple) -> ActionDist {
    argmax_dist(&utilities(spec, tuple))
}

pub fn prediction_table(spec: &CandidateModelSpec, domain: DomainId) -> ForwardTable {
    ForwardTable::from_fn(domain, spec.name.clone(), |t| predict(spec, t))
}
