//! The abstract two-location, two-item world shared by both paradigms.
//!
//! Every scenario is a combination of what the character believes is in each
//! location, which items they like, what is actually in each location, and
//! (for inference queries) which location they went to. All enumerations
//! follow one canonical order so that tables from different domains and
//! different runs line up index-for-index.
//!
//! Canonical order is lexicographic over the declaration order of the enums:
//! `OnlyItem1 < OnlyItem2 < Both`, `Like < Dislike`, `Near < Far`, with the
//! near location compared before the far one. Forward tuples are ordered by
//! (beliefs, desires, state); inference tuples by (given mental state, state,
//! action).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("inadmissible desire: the character cannot dislike both items")]
    InadmissibleDesire,
    #[error("correspondence requires two different domains, got {0} twice")]
    SameDomain(DomainId),
    #[error("malformed tuple key {key:?}: {reason}")]
    BadKey { key: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DomainId {
    ContainerWorld,
    MovieWorld,
}

impl DomainId {
    pub const ALL: [DomainId; 2] = [DomainId::ContainerWorld, DomainId::MovieWorld];

    /// Two-letter code used in tuple keys.
    pub fn code(self) -> &'static str {
        match self {
            DomainId::ContainerWorld => "CW",
            DomainId::MovieWorld => "MW",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "CW" => Some(DomainId::ContainerWorld),
            "MW" => Some(DomainId::MovieWorld),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            DomainId::ContainerWorld => DomainId::MovieWorld,
            DomainId::MovieWorld => DomainId::ContainerWorld,
        }
    }

    pub fn lexicon(self) -> &'static DomainLexicon {
        match self {
            DomainId::ContainerWorld => &CONTAINER_WORLD,
            DomainId::MovieWorld => &MOVIE_WORLD,
        }
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainId::ContainerWorld => "ContainerWorld",
            DomainId::MovieWorld => "MovieWorld",
        })
    }
}

impl FromStr for DomainId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ContainerWorld" | "CW" | "container" => Ok(DomainId::ContainerWorld),
            "MovieWorld" | "MW" | "movie" => Ok(DomainId::MovieWorld),
            other => Err(format!("unknown domain {other:?}")),
        }
    }
}

/// Surface wording for one domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainLexicon {
    pub near_label: &'static str,
    pub far_label: &'static str,
    pub item1_label: &'static str,
    pub item2_label: &'static str,
    pub both_label: &'static str,
    pub character_name: &'static str,
    pub cost_narrative: &'static str,
}

impl DomainLexicon {
    pub fn content_label(&self, content: Content) -> &'static str {
        match content {
            Content::OnlyItem1 => self.item1_label,
            Content::OnlyItem2 => self.item2_label,
            Content::Both => self.both_label,
        }
    }

    pub fn action_label(&self, action: Action) -> &'static str {
        match action {
            Action::Near => self.near_label,
            Action::Far => self.far_label,
        }
    }

    pub fn labels(&self) -> [&'static str; 7] {
        [
            self.near_label,
            self.far_label,
            self.item1_label,
            self.item2_label,
            self.both_label,
            self.character_name,
            self.cost_narrative,
        ]
    }
}

// Items map first-listed to first-listed: apples <-> action, oranges <-> romance.
static CONTAINER_WORLD: DomainLexicon = DomainLexicon {
    near_label: "box",
    far_label: "basket",
    item1_label: "apples",
    item2_label: "oranges",
    both_label: "apples and oranges",
    character_name: "Jason",
    cost_narrative: "about 50 steps away",
};

static MOVIE_WORLD: DomainLexicon = DomainLexicon {
    near_label: "5 min",
    far_label: "90 min",
    item1_label: "action",
    item2_label: "romance",
    both_label: "action-romance",
    character_name: "Jason",
    cost_narrative: "a 90-minute wait",
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Content {
    OnlyItem1,
    OnlyItem2,
    Both,
}

impl Content {
    pub const ALL: [Content; 3] = [Content::OnlyItem1, Content::OnlyItem2, Content::Both];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn has_item1(self) -> bool {
        matches!(self, Content::OnlyItem1 | Content::Both)
    }

    pub fn has_item2(self) -> bool {
        matches!(self, Content::OnlyItem2 | Content::Both)
    }

    fn code(self) -> &'static str {
        match self {
            Content::OnlyItem1 => "o1",
            Content::OnlyItem2 => "o2",
            Content::Both => "b",
        }
    }

    fn from_code(code: &str) -> Option<Self> {
        match code {
            "o1" => Some(Content::OnlyItem1),
            "o2" => Some(Content::OnlyItem2),
            "b" => Some(Content::Both),
            _ => None,
        }
    }
}

/// What sits in (or is believed to sit in) each location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Contents {
    pub near: Content,
    pub far: Content,
}

impl Contents {
    pub const fn new(near: Content, far: Content) -> Self {
        Contents { near, far }
    }

    pub fn at(self, location: Action) -> Content {
        match location {
            Action::Near => self.near,
            Action::Far => self.far,
        }
    }

    pub fn index(self) -> usize {
        self.near.index() * 3 + self.far.index()
    }

    pub fn all() -> impl Iterator<Item = Contents> + Clone {
        Content::ALL
            .into_iter()
            .flat_map(|near| Content::ALL.into_iter().map(move |far| Contents { near, far }))
    }

    fn code(self) -> String {
        format!("{}.{}", self.near.code(), self.far.code())
    }

    fn from_code(code: &str) -> Option<Self> {
        let (near, far) = code.split_once('.')?;
        Some(Contents {
            near: Content::from_code(near)?,
            far: Content::from_code(far)?,
        })
    }
}

/// The character's beliefs about both locations. May contradict the world state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BeliefState(pub Contents);

/// The true contents of both locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WorldState(pub Contents);

impl BeliefState {
    pub const COUNT: usize = 9;

    pub fn all() -> impl Iterator<Item = BeliefState> + Clone {
        Contents::all().map(BeliefState)
    }

    pub fn index(self) -> usize {
        self.0.index()
    }
}

impl WorldState {
    pub const COUNT: usize = 9;

    pub fn all() -> impl Iterator<Item = WorldState> + Clone {
        Contents::all().map(WorldState)
    }

    pub fn index(self) -> usize {
        self.0.index()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Attitude {
    Like,
    Dislike,
}

impl Attitude {
    pub const ALL: [Attitude; 2] = [Attitude::Like, Attitude::Dislike];

    pub fn index(self) -> usize {
        self as usize
    }

    fn code(self) -> &'static str {
        match self {
            Attitude::Like => "L",
            Attitude::Dislike => "D",
        }
    }

    fn from_code(code: &str) -> Option<Self> {
        match code {
            "L" => Some(Attitude::Like),
            "D" => Some(Attitude::Dislike),
            _ => None,
        }
    }
}

/// Attitudes toward both items. Disliking both is not a valid state, so the
/// fields are private and construction goes through [`validate_desire`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(Attitude, Attitude)", into = "(Attitude, Attitude)")]
pub struct DesireState {
    item1: Attitude,
    item2: Attitude,
}

impl DesireState {
    pub const COUNT: usize = 3;

    pub const ALL: [DesireState; 3] = [
        DesireState { item1: Attitude::Like, item2: Attitude::Like },
        DesireState { item1: Attitude::Like, item2: Attitude::Dislike },
        DesireState { item1: Attitude::Dislike, item2: Attitude::Like },
    ];

    pub fn item1(self) -> Attitude {
        self.item1
    }

    pub fn item2(self) -> Attitude {
        self.item2
    }

    pub fn likes_item1(self) -> bool {
        self.item1 == Attitude::Like
    }

    pub fn likes_item2(self) -> bool {
        self.item2 == Attitude::Like
    }

    /// Position in [`DesireState::ALL`].
    pub fn index(self) -> usize {
        match (self.item1, self.item2) {
            (Attitude::Like, Attitude::Like) => 0,
            (Attitude::Like, Attitude::Dislike) => 1,
            (Attitude::Dislike, Attitude::Like) => 2,
            (Attitude::Dislike, Attitude::Dislike) => unreachable!("inadmissible desire constructed"),
        }
    }

    fn code(self) -> String {
        format!("{}.{}", self.item1.code(), self.item2.code())
    }

    fn from_code(code: &str) -> Option<Result<Self, WorldError>> {
        let (a, b) = code.split_once('.')?;
        Some(validate_desire(Attitude::from_code(a)?, Attitude::from_code(b)?))
    }
}

impl TryFrom<(Attitude, Attitude)> for DesireState {
    type Error = WorldError;

    fn try_from((item1, item2): (Attitude, Attitude)) -> Result<Self, Self::Error> {
        validate_desire(item1, item2)
    }
}

impl From<DesireState> for (Attitude, Attitude) {
    fn from(d: DesireState) -> Self {
        (d.item1, d.item2)
    }
}

pub fn validate_desire(item1: Attitude, item2: Attitude) -> Result<DesireState, WorldError> {
    if item1 == Attitude::Dislike && item2 == Attitude::Dislike {
        return Err(WorldError::InadmissibleDesire);
    }
    Ok(DesireState { item1, item2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Near,
    Far,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Near, Action::Far];

    pub fn index(self) -> usize {
        self as usize
    }

    fn code(self) -> &'static str {
        match self {
            Action::Near => "N",
            Action::Far => "F",
        }
    }

    fn from_code(code: &str) -> Option<Self> {
        match code {
            "N" => Some(Action::Near),
            "F" => Some(Action::Far),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InferenceTask {
    #[serde(rename = "belief")]
    BeliefInference,
    #[serde(rename = "desire")]
    DesireInference,
    #[serde(rename = "joint")]
    JointInference,
}

impl InferenceTask {
    pub const ALL: [InferenceTask; 3] = [
        InferenceTask::BeliefInference,
        InferenceTask::DesireInference,
        InferenceTask::JointInference,
    ];

    /// Number of inference tuples for this task.
    pub fn tuple_count(self) -> usize {
        match self {
            InferenceTask::BeliefInference => DesireState::COUNT * WorldState::COUNT * 2,
            InferenceTask::DesireInference => BeliefState::COUNT * WorldState::COUNT * 2,
            InferenceTask::JointInference => WorldState::COUNT * 2,
        }
    }

    /// Short name used in configs, reports and file names.
    pub fn short_name(self) -> &'static str {
        match self {
            InferenceTask::BeliefInference => "belief",
            InferenceTask::DesireInference => "desire",
            InferenceTask::JointInference => "joint",
        }
    }

    /// Label used in study reports (`I_B`, `I_D`, `I_J`).
    pub fn measure_label(self) -> &'static str {
        match self {
            InferenceTask::BeliefInference => "I_B",
            InferenceTask::DesireInference => "I_D",
            InferenceTask::JointInference => "I_J",
        }
    }
}

impl fmt::Display for InferenceTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Either the forward (action-prediction) task or one of the inference tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Task {
    Forward,
    Inference(InferenceTask),
}

impl Task {
    pub const ALL: [Task; 4] = [
        Task::Forward,
        Task::Inference(InferenceTask::BeliefInference),
        Task::Inference(InferenceTask::DesireInference),
        Task::Inference(InferenceTask::JointInference),
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Task::Forward => "forward",
            Task::Inference(t) => t.short_name(),
        }
    }

    pub fn tuple_count(self) -> usize {
        match self {
            Task::Forward => ForwardTuple::COUNT,
            Task::Inference(t) => t.tuple_count(),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" | "F" | "AP" => Ok(Task::Forward),
            "belief" | "I_B" => Ok(Task::Inference(InferenceTask::BeliefInference)),
            "desire" | "I_D" => Ok(Task::Inference(InferenceTask::DesireInference)),
            "joint" | "I_J" => Ok(Task::Inference(InferenceTask::JointInference)),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

impl TryFrom<String> for Task {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Task> for String {
    fn from(t: Task) -> Self {
        t.short_name().to_string()
    }
}

/// A complete scenario for action prediction: ⟨beliefs, desires, state⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ForwardTuple {
    pub beliefs: BeliefState,
    pub desires: DesireState,
    pub state: WorldState,
}

impl ForwardTuple {
    pub const COUNT: usize = BeliefState::COUNT * DesireState::COUNT * WorldState::COUNT;

    /// Position in the canonical enumeration.
    pub fn index(&self) -> usize {
        (self.beliefs.index() * DesireState::COUNT + self.desires.index()) * WorldState::COUNT
            + self.state.index()
    }

    pub fn key(&self, domain: DomainId) -> String {
        format!(
            "{}|B={}|D={}|S={}|A=-",
            domain.code(),
            self.beliefs.0.code(),
            self.desires.code(),
            self.state.0.code()
        )
    }
}

/// An observed scenario with one or both mental states hidden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InferenceTuple {
    pub task: InferenceTask,
    pub given_beliefs: Option<BeliefState>,
    pub given_desires: Option<DesireState>,
    pub state: WorldState,
    pub action: Action,
}

impl InferenceTuple {
    pub fn belief(desires: DesireState, state: WorldState, action: Action) -> Self {
        InferenceTuple {
            task: InferenceTask::BeliefInference,
            given_beliefs: None,
            given_desires: Some(desires),
            state,
            action,
        }
    }

    pub fn desire(beliefs: BeliefState, state: WorldState, action: Action) -> Self {
        InferenceTuple {
            task: InferenceTask::DesireInference,
            given_beliefs: Some(beliefs),
            given_desires: None,
            state,
            action,
        }
    }

    pub fn joint(state: WorldState, action: Action) -> Self {
        InferenceTuple {
            task: InferenceTask::JointInference,
            given_beliefs: None,
            given_desires: None,
            state,
            action,
        }
    }

    /// Position within the canonical enumeration of its task.
    pub fn index(&self) -> usize {
        let tail = self.state.index() * 2 + self.action.index();
        match self.task {
            InferenceTask::BeliefInference => {
                self.given_desires.expect("belief task carries desires").index() * 18 + tail
            }
            InferenceTask::DesireInference => {
                self.given_beliefs.expect("desire task carries beliefs").index() * 18 + tail
            }
            InferenceTask::JointInference => tail,
        }
    }

    pub fn key(&self, domain: DomainId) -> String {
        let beliefs = self.given_beliefs.map_or_else(|| "-".to_string(), |b| b.0.code());
        let desires = self.given_desires.map_or_else(|| "-".to_string(), |d| d.code());
        format!(
            "{}|B={}|D={}|S={}|A={}",
            domain.code(),
            beliefs,
            desires,
            self.state.0.code(),
            self.action.code()
        )
    }
}

pub fn enumerate_forward_tuples(_domain: DomainId) -> Vec<ForwardTuple> {
    let mut out = Vec::with_capacity(ForwardTuple::COUNT);
    for beliefs in BeliefState::all() {
        for desires in DesireState::ALL {
            for state in WorldState::all() {
                out.push(ForwardTuple { beliefs, desires, state });
            }
        }
    }
    out
}

pub fn enumerate_inference_tuples(_domain: DomainId, task: InferenceTask) -> Vec<InferenceTuple> {
    let mut out = Vec::with_capacity(task.tuple_count());
    let state_actions = || {
        WorldState::all().flat_map(|s| Action::ALL.into_iter().map(move |a| (s, a)))
    };
    match task {
        InferenceTask::BeliefInference => {
            for d in DesireState::ALL {
                out.extend(state_actions().map(|(s, a)| InferenceTuple::belief(d, s, a)));
            }
        }
        InferenceTask::DesireInference => {
            for b in BeliefState::all() {
                out.extend(state_actions().map(|(s, a)| InferenceTuple::desire(b, s, a)));
            }
        }
        InferenceTask::JointInference => {
            out.extend(state_actions().map(|(s, a)| InferenceTuple::joint(s, a)));
        }
    }
    out
}

/// Tuples that can be mapped between domains.
pub trait Correspond: Sized + Copy {
    /// Map this tuple from `from` to `to`. The abstract encoding is shared, so
    /// the mapping is the identity on fields.
    fn correspond(&self, from: DomainId, to: DomainId) -> Result<Self, WorldError> {
        if from == to {
            return Err(WorldError::SameDomain(from));
        }
        Ok(*self)
    }
}

impl Correspond for ForwardTuple {}
impl Correspond for InferenceTuple {}
impl Correspond for Action {}

pub fn correspond<T: Correspond>(tuple: &T, from: DomainId, to: DomainId) -> Result<T, WorldError> {
    tuple.correspond(from, to)
}

/// A tuple together with the domain it was rendered in, as recovered from a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SituatedTuple {
    Forward(DomainId, ForwardTuple),
    Inference(DomainId, InferenceTuple),
}

impl SituatedTuple {
    pub fn domain(&self) -> DomainId {
        match self {
            SituatedTuple::Forward(d, _) | SituatedTuple::Inference(d, _) => *d,
        }
    }

    pub fn key(&self) -> String {
        match self {
            SituatedTuple::Forward(d, t) => t.key(*d),
            SituatedTuple::Inference(d, t) => t.key(*d),
        }
    }
}

/// Parse a tuple key such as `CW|B=o1.o2|D=L.D|S=b.o2|A=-`.
///
/// The task of an inference key is implied by which mental states are `-`.
pub fn parse_tuple_key(key: &str) -> Result<SituatedTuple, WorldError> {
    let bad = |reason: &str| WorldError::BadKey { key: key.to_string(), reason: reason.to_string() };
    let parts: Vec<&str> = key.split('|').collect();
    let [domain, b, d, s, a] = parts.as_slice() else {
        return Err(bad("expected five '|'-separated fields"));
    };
    let domain = DomainId::from_code(domain).ok_or_else(|| bad("unknown domain code"))?;
    fn field<'k>(raw: &'k str, name: &str) -> Option<&'k str> {
        raw.strip_prefix(name)?.strip_prefix('=')
    }
    let (Some(b), Some(d), Some(s), Some(a)) = (field(b, "B"), field(d, "D"), field(s, "S"), field(a, "A"))
    else {
        return Err(bad("expected fields B, D, S, A in order"));
    };

    let beliefs = match b {
        "-" => None,
        code => Some(BeliefState(Contents::from_code(code).ok_or_else(|| bad("bad beliefs"))?)),
    };
    let desires = match d {
        "-" => None,
        code => Some(DesireState::from_code(code).ok_or_else(|| bad("bad desires"))??),
    };
    let state = WorldState(Contents::from_code(s).ok_or_else(|| bad("bad state"))?);
    let action = match a {
        "-" => None,
        code => Some(Action::from_code(code).ok_or_else(|| bad("bad action"))?),
    };

    match (beliefs, desires, action) {
        (Some(beliefs), Some(desires), None) => {
            Ok(SituatedTuple::Forward(domain, ForwardTuple { beliefs, desires, state }))
        }
        (None, Some(d), Some(a)) => Ok(SituatedTuple::Inference(domain, InferenceTuple::belief(d, state, a))),
        (Some(b), None, Some(a)) => Ok(SituatedTuple::Inference(domain, InferenceTuple::desire(b, state, a))),
        (None, None, Some(a)) => Ok(SituatedTuple::Inference(domain, InferenceTuple::joint(state, a))),
        _ => Err(bad("field combination matches no task")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn forward_enumeration_has_243_tuples() {
        for domain in DomainId::ALL {
            let tuples = enumerate_forward_tuples(domain);
            assert_eq!(tuples.len(), 243);
            let unique: HashSet<_> = tuples.iter().collect();
            assert_eq!(unique.len(), 243);
        }
    }

    #[test]
    fn first_forward_tuple_is_lexicographic_minimum() {
        let first = enumerate_forward_tuples(DomainId::ContainerWorld)[0];
        let one = Contents::new(Content::OnlyItem1, Content::OnlyItem1);
        assert_eq!(first.beliefs, BeliefState(one));
        assert_eq!(first.desires, validate_desire(Attitude::Like, Attitude::Like).unwrap());
        assert_eq!(first.state, WorldState(one));
    }

    #[test]
    fn canonical_order_is_sorted_and_indexed() {
        let tuples = enumerate_forward_tuples(DomainId::MovieWorld);
        assert!(tuples.windows(2).all(|w| w[0] < w[1]));
        for (i, t) in tuples.iter().enumerate() {
            assert_eq!(t.index(), i);
        }
        for task in InferenceTask::ALL {
            let tuples = enumerate_inference_tuples(DomainId::MovieWorld, task);
            assert!(tuples.windows(2).all(|w| w[0] < w[1]));
            for (i, t) in tuples.iter().enumerate() {
                assert_eq!(t.index(), i);
                assert_eq!(t.task, task);
            }
        }
    }

    #[test]
    fn inference_cardinalities() {
        for domain in DomainId::ALL {
            let lens: Vec<usize> = InferenceTask::ALL
                .iter()
                .map(|&t| enumerate_inference_tuples(domain, t).len())
                .collect();
            assert_eq!(lens, vec![54, 162, 18]);
        }
    }

    #[test]
    fn inference_tuples_carry_only_their_given_states() {
        for t in enumerate_inference_tuples(DomainId::ContainerWorld, InferenceTask::BeliefInference) {
            assert!(t.given_beliefs.is_none() && t.given_desires.is_some());
        }
        for t in enumerate_inference_tuples(DomainId::ContainerWorld, InferenceTask::DesireInference) {
            assert!(t.given_beliefs.is_some() && t.given_desires.is_none());
        }
        for t in enumerate_inference_tuples(DomainId::ContainerWorld, InferenceTask::JointInference) {
            assert!(t.given_beliefs.is_none() && t.given_desires.is_none());
        }
    }

    #[test]
    fn domains_enumerate_identically_and_correspond() {
        let cw = enumerate_forward_tuples(DomainId::ContainerWorld);
        let mw = enumerate_forward_tuples(DomainId::MovieWorld);
        assert_eq!(cw, mw);
        for (a, b) in cw.iter().zip(&mw) {
            let mapped = correspond(a, DomainId::ContainerWorld, DomainId::MovieWorld).unwrap();
            assert_eq!(&mapped, b);
            let back = correspond(&mapped, DomainId::MovieWorld, DomainId::ContainerWorld).unwrap();
            assert_eq!(&back, a);
        }
        assert_eq!(
            correspond(&cw[0], DomainId::MovieWorld, DomainId::MovieWorld),
            Err(WorldError::SameDomain(DomainId::MovieWorld))
        );
    }

    #[test]
    fn near_action_renders_as_box_and_five_minutes() {
        let near = correspond(&Action::Near, DomainId::ContainerWorld, DomainId::MovieWorld).unwrap();
        assert_eq!(DomainId::ContainerWorld.lexicon().action_label(Action::Near), "box");
        assert_eq!(DomainId::MovieWorld.lexicon().action_label(near), "5 min");
        assert_eq!(DomainId::MovieWorld.lexicon().action_label(Action::Far), "90 min");
    }

    #[test]
    fn desire_validation() {
        assert!(validate_desire(Attitude::Like, Attitude::Dislike).is_ok());
        assert!(validate_desire(Attitude::Like, Attitude::Like).is_ok());
        assert_eq!(
            validate_desire(Attitude::Dislike, Attitude::Dislike),
            Err(WorldError::InadmissibleDesire)
        );
        let json = serde_json::to_string(&(Attitude::Dislike, Attitude::Dislike)).unwrap();
        assert!(serde_json::from_str::<DesireState>(&json).is_err());
    }

    #[test]
    fn lexicon_labels_are_distinct_and_nonempty() {
        for domain in DomainId::ALL {
            let labels = domain.lexicon().labels();
            assert!(labels.iter().all(|l| !l.is_empty()));
            let unique: HashSet<_> = labels.iter().collect();
            assert_eq!(unique.len(), labels.len());
        }
    }

    #[test]
    fn keys_round_trip_and_are_unique() {
        let mut seen = HashSet::new();
        for domain in DomainId::ALL {
            for t in enumerate_forward_tuples(domain) {
                let key = t.key(domain);
                assert_eq!(parse_tuple_key(&key).unwrap(), SituatedTuple::Forward(domain, t));
                assert!(seen.insert(key));
            }
            for task in InferenceTask::ALL {
                for t in enumerate_inference_tuples(domain, task) {
                    let key = t.key(domain);
                    assert_eq!(parse_tuple_key(&key).unwrap(), SituatedTuple::Inference(domain, t));
                    assert!(seen.insert(key));
                }
            }
        }
        assert_eq!(seen.len(), 954);
    }

    #[test]
    fn key_format() {
        let t = ForwardTuple {
            beliefs: BeliefState(Contents::new(Content::OnlyItem1, Content::OnlyItem2)),
            desires: validate_desire(Attitude::Like, Attitude::Dislike).unwrap(),
            state: WorldState(Contents::new(Content::Both, Content::OnlyItem2)),
        };
        assert_eq!(t.key(DomainId::ContainerWorld), "CW|B=o1.o2|D=L.D|S=b.o2|A=-");
        assert!(parse_tuple_key("CW|B=o1.o2|D=D.D|S=b.o2|A=-").is_err());
        assert!(parse_tuple_key("XX|B=o1.o2|D=L.D|S=b.o2|A=-").is_err());
        assert!(parse_tuple_key("CW|B=-|D=-|S=b.o2|A=-").is_err());
    }
}
