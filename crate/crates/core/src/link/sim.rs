//! Simulated respondents with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::response::{RawResponse, TokenLogprob, TopLogprob};
use super::{LinkError, Respondent};
use crate::dist::FiniteDistribution;
use crate::inversion::{posterior_table, PosteriorTable};
use crate::models::{argmax_dist, family_member, utilities, CandidateModelSpec};
use crate::prompt::RenderedQuery;
use crate::table::{ActionDist, ForwardTable};
use crate::world::{parse_tuple_key, DomainId, ForwardTuple, InferenceTask, InferenceTuple, SituatedTuple};

/// A default-family model by name, or a full spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Named(String),
    Spec(CandidateModelSpec),
}

impl ModelChoice {
    pub fn resolve(&self) -> Result<CandidateModelSpec, LinkError> {
        let spec = match self {
            ModelChoice::Named(n) => family_member(n).map_err(|e| LinkError::Config(e.to_string()))?,
            ModelChoice::Spec(s) => s.clone(),
        };
        spec.validate().map_err(|e| LinkError::Config(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InferenceMode {
    /// Answer by exact inversion of the agent's own forward table.
    SelfConsistent,
    /// Mix the exact answer with seeded noise; `mix` is the noise weight.
    Corrupted { mix: f64 },
}

fn default_name() -> String {
    "agent".into()
}
fn default_model() -> ModelChoice {
    ModelChoice::Named("HumanToM".into())
}
fn default_inference() -> InferenceMode {
    InferenceMode::SelfConsistent
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimAgentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_model")]
    pub base_model: ModelChoice,
    #[serde(default)]
    pub softmax_temperature: f64,
    /// Half-width of the uniform utility noise, drawn independently per domain.
    #[serde(default)]
    pub domain_perturbation: f64,
    #[serde(default = "default_inference")]
    pub inference: InferenceMode,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimAgentConfig {
    fn default() -> Self {
        SimAgentConfig {
            name: default_name(),
            base_model: default_model(),
            softmax_temperature: 0.0,
            domain_perturbation: 0.0,
            inference: default_inference(),
            seed: 0,
        }
    }
}

impl SimAgentConfig {
    pub fn validate(&self) -> Result<CandidateModelSpec, LinkError> {
        let bad = |m: String| Err(LinkError::Config(m));
        if !(self.softmax_temperature >= 0.0 && self.softmax_temperature.is_finite()) {
            return bad(format!("softmax_temperature must be nonnegative, got {}", self.softmax_temperature));
        }
        if !(self.domain_perturbation >= 0.0 && self.domain_perturbation.is_finite()) {
            return bad(format!("domain_perturbation must be nonnegative, got {}", self.domain_perturbation));
        }
        if let InferenceMode::Corrupted { mix } = self.inference {
            if !(0.0..=1.0).contains(&mix) {
                return bad(format!("corruption mix must be in [0, 1], got {mix}"));
            }
        }
        self.base_model.resolve()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(parts: &[u64]) -> ChaCha8Rng {
    let s = parts.iter().fold(0x6D69_6E64_7072_6F62, |acc, &p| splitmix(acc ^ p));
    ChaCha8Rng::seed_from_u64(s)
}

fn domain_tag(domain: DomainId) -> u64 {
    match domain {
        DomainId::ContainerWorld => 1,
        DomainId::MovieWorld => 2,
    }
}

fn softmax(u: &[f64], tau: f64) -> FiniteDistribution {
    let max = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    FiniteDistribution::from_weights(u.iter().map(|x| ((x - max) / tau).exp()).collect()).expect("max term is 1")
}

fn forward_with(spec: &CandidateModelSpec, cfg: &SimAgentConfig, tuple: &ForwardTuple, domain: DomainId) -> ActionDist {
    let mut u = utilities(spec, tuple);
    if cfg.domain_perturbation > 0.0 {
        let mut rng = stream(&[cfg.seed, domain_tag(domain), 0xF0, tuple.index() as u64]);
        for x in u.iter_mut() {
            *x += cfg.domain_perturbation * rng.random_range(-1.0..1.0);
        }
    }
    if cfg.softmax_temperature == 0.0 {
        argmax_dist(&u)
    } else {
        softmax(&u, cfg.softmax_temperature)
    }
}

/// The agent's action distribution for one tuple.
pub fn simulate_forward(cfg: &SimAgentConfig, tuple: &ForwardTuple, domain: DomainId) -> Result<ActionDist, LinkError> {
    let spec = cfg.validate()?;
    Ok(forward_with(&spec, cfg, tuple, domain))
}

fn forward_table(spec: &CandidateModelSpec, cfg: &SimAgentConfig, domain: DomainId) -> ForwardTable {
    ForwardTable::from_fn(domain, format!("sim:{}", cfg.name), |t| forward_with(spec, cfg, t, domain))
}

fn corrupt(cfg: &SimAgentConfig, tuple: &InferenceTuple, domain: DomainId, exact: &[FiniteDistribution]) -> Vec<FiniteDistribution> {
    let InferenceMode::Corrupted { mix } = cfg.inference else { return exact.to_vec() };
    let task_tag = match tuple.task {
        InferenceTask::BeliefInference => 1,
        InferenceTask::DesireInference => 2,
        InferenceTask::JointInference => 3,
    };
    let mut rng = stream(&[cfg.seed, domain_tag(domain), 0xC0 + task_tag, tuple.index() as u64]);
    exact
        .iter()
        .map(|d| {
            let w: Vec<f64> = (0..d.len()).map(|_| rng.random_range(0.01..1.0)).collect();
            let noise = FiniteDistribution::from_weights(w).expect("positive weights");
            d.mix(&noise, mix)
        })
        .collect()
}

fn inference_from(cfg: &SimAgentConfig, table: &PosteriorTable, tuple: &InferenceTuple, domain: DomainId) -> Vec<FiniteDistribution> {
    corrupt(cfg, tuple, domain, &table.rows[tuple.index()].marginals)
}

/// The agent's per-slot answers to one inference tuple.
pub fn simulate_inference(
    cfg: &SimAgentConfig,
    tuple: &InferenceTuple,
    domain: DomainId,
) -> Result<Vec<FiniteDistribution>, LinkError> {
    let spec = cfg.validate()?;
    let table = posterior_table(&forward_table(&spec, cfg, domain), domain, tuple.task)
        .map_err(|e| LinkError::Config(e.to_string()))?;
    Ok(inference_from(cfg, &table, tuple, domain))
}

/// A respondent that answers from a simulated agent, emitting JSON answers
/// whose token alternatives carry the agent's exact probabilities.
pub struct SimAgent {
    config: SimAgentConfig,
    forward: [ForwardTable; 2],
    posteriors: [[PosteriorTable; 3]; 2],
}

impl SimAgent {
    pub fn new(config: SimAgentConfig) -> Result<Self, LinkError> {
        let spec = config.validate()?;
        let forward = DomainId::ALL.map(|d| forward_table(&spec, &config, d));
        let posteriors = [0, 1].map(|i| {
            InferenceTask::ALL.map(|t| posterior_table(&forward[i], DomainId::ALL[i], t).expect("uniform prior fits"))
        });
        Ok(SimAgent { config, forward, posteriors })
    }

    pub fn config(&self) -> &SimAgentConfig {
        &self.config
    }

    pub fn forward_table(&self, domain: DomainId) -> &ForwardTable {
        &self.forward[domain_slot(domain)]
    }

    pub fn answer(&self, tuple: &SituatedTuple) -> Vec<FiniteDistribution> {
        match tuple {
            SituatedTuple::Forward(d, t) => vec![self.forward[domain_slot(*d)].get(t).clone()],
            SituatedTuple::Inference(d, t) => {
                let table = &self.posteriors[domain_slot(*d)][task_slot(t.task)];
                inference_from(&self.config, table, t, *d)
            }
        }
    }
}

fn domain_slot(d: DomainId) -> usize {
    match d {
        DomainId::ContainerWorld => 0,
        DomainId::MovieWorld => 1,
    }
}

fn task_slot(t: InferenceTask) -> usize {
    InferenceTask::ALL.iter().position(|x| *x == t).expect("listed")
}

fn fixed(text: &str) -> TokenLogprob {
    TokenLogprob { token: text.into(), logprob: 0.0, top_logprobs: vec![TopLogprob { token: text.into(), logprob: 0.0 }] }
}

/// Render per-slot distributions as a JSON answer with one token per value.
pub(crate) fn synthesize(query: &RenderedQuery, answers: &[FiniteDistribution]) -> Result<RawResponse, LinkError> {
    if answers.len() != query.answer_slots.len() {
        return Err(LinkError::Config(format!(
            "{}: template asks {} slot(s), agent answers {}",
            query.tuple_key,
            query.answer_slots.len(),
            answers.len()
        )));
    }
    let mut tokens = Vec::new();
    for (i, (slot, dist)) in query.answer_slots.iter().zip(answers).enumerate() {
        if slot.candidates.len() != dist.len() {
            return Err(LinkError::Config(format!("slot {} has {} candidates", slot.field, slot.candidates.len())));
        }
        tokens.push(fixed(if i == 0 { "{\"" } else { ", \"" }));
        let field = serde_json::to_string(&slot.field).expect("string");
        tokens.push(fixed(&field[1..field.len() - 1]));
        tokens.push(fixed("\": \""));
        // The closing quote rides on the value token so prefix candidates stay distinct.
        let value = |c: usize| serde_json::to_string(&slot.candidates[c]).expect("string")[1..].to_string();
        let chosen = dist.argmax_set()[0];
        let top = (0..dist.len())
            .filter(|&c| dist.prob(c) > 0.0)
            .map(|c| TopLogprob { token: value(c), logprob: dist.prob(c).ln() })
            .collect();
        tokens.push(TokenLogprob { token: value(chosen), logprob: dist.prob(chosen).ln(), top_logprobs: top });
    }
    tokens.push(fixed("}"));
    let content = tokens.iter().map(|t| t.token.as_str()).collect();
    Ok(RawResponse { content, tokens })
}

impl Respondent for SimAgent {
    fn model_id(&self) -> String {
        format!("sim:{}", self.config.name)
    }

    fn params(&self) -> String {
        serde_json::to_string(&self.config).expect("config serializes")
    }

    fn respond(&self, query: &RenderedQuery) -> Result<RawResponse, LinkError> {
        let tuple = parse_tuple_key(&query.tuple_key).map_err(|e| LinkError::MalformedResponse(e.to_string()))?;
        synthesize(query, &self.answer(&tuple))
    }
}
