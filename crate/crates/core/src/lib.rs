//! Evaluation harness for probing whether a respondent holds a coherent,
//! abstract and consistent model of how beliefs, desires and costs produce
//! action.

pub mod dist;
pub mod inversion;
pub mod link;
pub mod metrics;
pub mod models;
pub mod prompt;
pub mod stats;
pub mod study;
pub mod table;
pub mod world;

pub use dist::FiniteDistribution;
pub use inversion::{invert, marginalize, posterior_table, JointPosterior, PosteriorTable};
pub use link::{cached_query, Archive, EndpointConfig, QueryRecord, Respondent, SimAgent, SimAgentConfig};
pub use metrics::{agreement, bayesian_consistency, cross_domain_forward, cross_domain_inference, validity};
pub use models::{default_family, predict, prediction_table, BeliefSource, CandidateModelSpec};
pub use prompt::{RenderedQuery, TemplateSet};
pub use study::{replay, run_study, RunConfig, StudyError, StudyId, StudyReport};
pub use table::{ActionDist, ForwardTable, InferenceTable, SlotKind};
pub use world::{
    Action, BeliefState, DesireState, DomainId, ForwardTuple, InferenceTask, InferenceTuple, Task, WorldState,
};
