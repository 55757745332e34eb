//! Complete tables of distributions over the enumerated tuples.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::FiniteDistribution;
use crate::world::{
    enumerate_forward_tuples, enumerate_inference_tuples, Action, DomainId, ForwardTuple, InferenceTask,
    InferenceTuple, Task,
};

/// A distribution over `{Near, Far}`, indexed by [`Action::index`].
pub type ActionDist = FiniteDistribution;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("table is incomplete: {} tuple(s) missing, first {}", missing.len(), missing.first().map(String::as_str).unwrap_or("?"))]
    IncompleteTable { missing: Vec<String> },
    #[error("entry for {key} has the wrong shape: {reason}")]
    BadEntry { key: String, reason: String },
    #[error("tables disagree: {0}")]
    Mismatch(String),
}

/// One answer position in a response: an action or one latent variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Action,
    NearContent,
    FarContent,
    Item1Attitude,
    Item2Attitude,
}

impl SlotKind {
    pub const ALL: [SlotKind; 5] = [
        SlotKind::Action,
        SlotKind::NearContent,
        SlotKind::FarContent,
        SlotKind::Item1Attitude,
        SlotKind::Item2Attitude,
    ];

    pub fn support_size(self) -> usize {
        match self {
            SlotKind::Action | SlotKind::Item1Attitude | SlotKind::Item2Attitude => 2,
            SlotKind::NearContent | SlotKind::FarContent => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SlotKind::Action => "action",
            SlotKind::NearContent => "near_content",
            SlotKind::FarContent => "far_content",
            SlotKind::Item1Attitude => "item1_attitude",
            SlotKind::Item2Attitude => "item2_attitude",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        SlotKind::ALL.into_iter().find(|s| s.name() == name)
    }

    /// The answer slots queried for a task, in canonical order.
    pub fn for_task(task: Task) -> &'static [SlotKind] {
        match task {
            Task::Forward => &[SlotKind::Action],
            Task::Inference(InferenceTask::BeliefInference) => &[SlotKind::NearContent, SlotKind::FarContent],
            Task::Inference(InferenceTask::DesireInference) => {
                &[SlotKind::Item1Attitude, SlotKind::Item2Attitude]
            }
            Task::Inference(InferenceTask::JointInference) => &[
                SlotKind::NearContent,
                SlotKind::FarContent,
                SlotKind::Item1Attitude,
                SlotKind::Item2Attitude,
            ],
        }
    }
}

impl fmt::Display for SlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Action distributions for all 243 forward tuples of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTable {
    domain: DomainId,
    provenance: String,
    entries: Vec<ActionDist>,
}

impl ForwardTable {
    pub fn from_fn(
        domain: DomainId,
        provenance: impl Into<String>,
        mut f: impl FnMut(&ForwardTuple) -> ActionDist,
    ) -> Self {
        let entries = enumerate_forward_tuples(domain)
            .iter()
            .map(|t| {
                let d = f(t);
                assert_eq!(d.len(), 2, "action distributions have two outcomes");
                d
            })
            .collect();
        ForwardTable { domain, provenance: provenance.into(), entries }
    }

    /// Build from an arbitrary map; fails if any tuple is absent.
    pub fn from_map(
        domain: DomainId,
        provenance: impl Into<String>,
        mut map: HashMap<ForwardTuple, ActionDist>,
    ) -> Result<Self, TableError> {
        let tuples = enumerate_forward_tuples(domain);
        let missing: Vec<String> =
            tuples.iter().filter(|t| !map.contains_key(t)).map(|t| t.key(domain)).collect();
        if !missing.is_empty() {
            return Err(TableError::IncompleteTable { missing });
        }
        let mut entries = Vec::with_capacity(tuples.len());
        for t in &tuples {
            let d = map.remove(t).expect("checked above");
            if d.len() != 2 {
                return Err(TableError::BadEntry { key: t.key(domain), reason: "expected 2 outcomes".into() });
            }
            entries.push(d);
        }
        Ok(ForwardTable { domain, provenance: provenance.into(), entries })
    }

    pub fn domain(&self) -> DomainId {
        self.domain
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn get(&self, tuple: &ForwardTuple) -> &ActionDist {
        &self.entries[tuple.index()]
    }

    pub fn entries(&self) -> &[ActionDist] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (ForwardTuple, &ActionDist)> {
        enumerate_forward_tuples(self.domain).into_iter().zip(&self.entries)
    }

    /// Same entries relabelled as belonging to another domain.
    pub fn relabel(&self, domain: DomainId) -> Self {
        ForwardTable { domain, provenance: self.provenance.clone(), entries: self.entries.clone() }
    }

    /// Whether `action` is among the most probable actions for `tuple`.
    pub fn produces(&self, tuple: &ForwardTuple, action: Action) -> bool {
        self.get(tuple).argmax_set().contains(&action.index())
    }
}

/// Per-slot marginals for every inference tuple of one task and domain.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceTable {
    domain: DomainId,
    task: InferenceTask,
    provenance: String,
    rows: Vec<Vec<FiniteDistribution>>,
}

impl InferenceTable {
    pub fn from_fn(
        domain: DomainId,
        task: InferenceTask,
        provenance: impl Into<String>,
        mut f: impl FnMut(&InferenceTuple) -> Vec<FiniteDistribution>,
    ) -> Self {
        let slots = SlotKind::for_task(Task::Inference(task));
        let rows = enumerate_inference_tuples(domain, task)
            .iter()
            .map(|t| {
                let row = f(t);
                assert_eq!(row.len(), slots.len());
                for (d, s) in row.iter().zip(slots) {
                    assert_eq!(d.len(), s.support_size());
                }
                row
            })
            .collect();
        InferenceTable { domain, task, provenance: provenance.into(), rows }
    }

    pub fn from_map(
        domain: DomainId,
        task: InferenceTask,
        provenance: impl Into<String>,
        mut map: HashMap<InferenceTuple, Vec<FiniteDistribution>>,
    ) -> Result<Self, TableError> {
        let tuples = enumerate_inference_tuples(domain, task);
        let missing: Vec<String> =
            tuples.iter().filter(|t| !map.contains_key(t)).map(|t| t.key(domain)).collect();
        if !missing.is_empty() {
            return Err(TableError::IncompleteTable { missing });
        }
        let slots = SlotKind::for_task(Task::Inference(task));
        let mut rows = Vec::with_capacity(tuples.len());
        for t in &tuples {
            let row = map.remove(t).expect("checked above");
            let shape_ok =
                row.len() == slots.len() && row.iter().zip(slots).all(|(d, s)| d.len() == s.support_size());
            if !shape_ok {
                return Err(TableError::BadEntry { key: t.key(domain), reason: "slot shape mismatch".into() });
            }
            rows.push(row);
        }
        Ok(InferenceTable { domain, task, provenance: provenance.into(), rows })
    }

    pub fn domain(&self) -> DomainId {
        self.domain
    }

    pub fn task(&self) -> InferenceTask {
        self.task
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn slots(&self) -> &'static [SlotKind] {
        SlotKind::for_task(Task::Inference(self.task))
    }

    pub fn get(&self, tuple: &InferenceTuple) -> &[FiniteDistribution] {
        assert_eq!(tuple.task, self.task);
        &self.rows[tuple.index()]
    }

    pub fn rows(&self) -> &[Vec<FiniteDistribution>] {
        &self.rows
    }

    pub fn iter(&self) -> impl Iterator<Item = (InferenceTuple, &[FiniteDistribution])> {
        enumerate_inference_tuples(self.domain, self.task)
            .into_iter()
            .zip(self.rows.iter().map(Vec::as_slice))
    }

    pub fn relabel(&self, domain: DomainId) -> Self {
        InferenceTable { domain, ..self.clone() }
    }
}
