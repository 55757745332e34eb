//! The three evaluations: agreement with candidate models, cross-domain
//! correlation, and consistency between predictions and inferences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inversion::{latent_space, Latent, PosteriorTable};
use crate::stats::{grouped_pearson_ci, pearson, short_decimal, BootstrapCi, StatsError};
use crate::table::{ForwardTable, InferenceTable, SlotKind, TableError};
use crate::world::{
    correspond, validate_desire, Attitude, BeliefState, Content, Contents, InferenceTuple, WorldError,
};

pub const DEFAULT_N_BOOT: usize = 10_000;
pub const DEFAULT_SEED: u64 = 20_241_105;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Table(#[from] TableError),
}

impl MetricsError {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, MetricsError::Stats(StatsError::DegenerateVariance(_)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementEntry {
    pub model: String,
    /// Mean respondent probability on the model's best actions, ties averaged.
    pub mean_assigned_probability: f64,
    /// Chance that a uniform pick from the respondent's best actions equals a
    /// uniform pick from the model's.
    pub argmax_match_rate: f64,
    pub n_tuples: usize,
}

pub fn agreement(respondent: &ForwardTable, model: &ForwardTable) -> Result<AgreementEntry, MetricsError> {
    if respondent.domain() != model.domain() {
        return Err(TableError::Mismatch(format!(
            "respondent table is {} but model table is {}",
            respondent.domain(),
            model.domain()
        ))
        .into());
    }
    let mut assigned = 0.0;
    let mut matched = 0.0;
    let n = respondent.entries().len();
    for (r, m) in respondent.entries().iter().zip(model.entries()) {
        let best_m = m.argmax_set();
        let best_r = r.argmax_set();
        assigned += best_m.iter().map(|&a| r.prob(a)).sum::<f64>() / best_m.len() as f64;
        let overlap = best_r.iter().filter(|a| best_m.contains(a)).count() as f64;
        matched += overlap / (best_r.len() * best_m.len()) as f64;
    }
    Ok(AgreementEntry {
        model: model.provenance().to_string(),
        mean_assigned_probability: assigned / n as f64,
        argmax_match_rate: matched / n as f64,
        n_tuples: n,
    })
}

/// Per-tuple coordinates used for correlations: P(Near) for forward tables;
/// concatenated marginals for inference tables, with the redundant second
/// entry of each two-way slot dropped.
pub fn forward_coordinates(table: &ForwardTable) -> Vec<Vec<f64>> {
    table.entries().iter().map(|d| vec![d.prob(0)]).collect()
}

pub fn inference_coordinates(table: &InferenceTable) -> Vec<Vec<f64>> {
    table.rows().iter().map(|row| flatten_row(row)).collect()
}

fn flatten_row(row: &[crate::dist::FiniteDistribution]) -> Vec<f64> {
    row.iter()
        .flat_map(|d| {
            let keep = if d.len() == 2 { 1 } else { d.len() };
            d.probs()[..keep].to_vec()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_pairs: usize,
    pub n_tuples: usize,
    pub seed: u64,
    pub n_boot: usize,
    pub degenerate_resamples: usize,
}

impl CorrelationReport {
    /// `r = .78, CI95% [.68, .85]`
    pub fn formatted(&self) -> String {
        format!(
            "r = {}, CI95% [{}, {}]",
            short_decimal(self.r),
            short_decimal(self.ci_low),
            short_decimal(self.ci_high)
        )
    }
}

impl From<BootstrapCi> for CorrelationReport {
    fn from(ci: BootstrapCi) -> Self {
        CorrelationReport {
            r: ci.r,
            ci_low: ci.ci_low,
            ci_high: ci.ci_high,
            n_pairs: ci.n_pairs,
            n_tuples: ci.n_groups,
            seed: ci.seed,
            n_boot: ci.n_boot,
            degenerate_resamples: ci.degenerate_resamples,
        }
    }
}

/// Correlate a respondent's action predictions across the two domains.
pub fn cross_domain_forward(
    a: &ForwardTable,
    b: &ForwardTable,
    n_boot: usize,
    seed: u64,
) -> Result<CorrelationReport, MetricsError> {
    let bx = forward_coordinates(b);
    let mut ys = Vec::with_capacity(bx.len());
    for (t, _) in a.iter() {
        let mapped = correspond(&t, a.domain(), b.domain())?;
        ys.push(bx[mapped.index()].clone());
    }
    Ok(grouped_pearson_ci(&forward_coordinates(a), &ys, n_boot, seed)?.into())
}

/// Correlate a respondent's inferences for one task across the two domains.
pub fn cross_domain_inference(
    a: &InferenceTable,
    b: &InferenceTable,
    n_boot: usize,
    seed: u64,
) -> Result<CorrelationReport, MetricsError> {
    if a.task() != b.task() {
        return Err(TableError::Mismatch(format!("tasks {} and {}", a.task(), b.task())).into());
    }
    let mut ys = Vec::with_capacity(a.rows().len());
    for (t, _) in a.iter() {
        let mapped = correspond(&t, a.domain(), b.domain())?;
        ys.push(flatten_row(b.get(&mapped)));
    }
    Ok(grouped_pearson_ci(&inference_coordinates(a), &ys, n_boot, seed)?.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesianScore {
    pub r: f64,
    pub n_pairs: usize,
    pub zero_evidence: usize,
}

/// Pearson r between direct inferences and the expected posterior, over all
/// marginal coordinates of all tuples.
pub fn bayesian_consistency(direct: &InferenceTable, expected: &PosteriorTable) -> Result<BayesianScore, MetricsError> {
    if direct.task() != expected.task || direct.domain() != expected.domain {
        return Err(TableError::Mismatch(format!(
            "direct {}/{} vs expected {}/{}",
            direct.domain(),
            direct.task(),
            expected.domain,
            expected.task
        ))
        .into());
    }
    let x: Vec<f64> = inference_coordinates(direct).into_iter().flatten().collect();
    let y: Vec<f64> = expected.rows.iter().flat_map(|r| flatten_row(&r.marginals)).collect();
    let r = pearson(&x, &y)?;
    Ok(BayesianScore { r, n_pairs: x.len(), zero_evidence: expected.zero_evidence_count() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityScore {
    pub n_tuples: usize,
    pub passes: usize,
    /// Tuples where some inferred marginal had more than one most-likely value.
    pub tie_count: usize,
    /// Tuples where no admissible mental state makes the forward table produce the observed action.
    pub unexplainable: usize,
}

impl ValidityScore {
    pub fn accuracy(&self) -> f64 {
        self.passes as f64 / self.n_tuples as f64
    }

    /// Accuracy over the tuples that some mental state could explain.
    pub fn explainable_accuracy(&self) -> Option<f64> {
        let n = self.n_tuples - self.unexplainable;
        (n > 0).then(|| self.passes as f64 / n as f64)
    }
}

/// Feed the most likely inferred mental states back through the forward table
/// and check that the observed action is among its best actions.
///
/// When an inferred marginal is tied, every combination of tied values is
/// tried and the tuple passes if any admissible one produces the action.
pub fn validity(direct: &InferenceTable, forward: &ForwardTable) -> Result<ValidityScore, MetricsError> {
    if direct.domain() != forward.domain() {
        return Err(TableError::Mismatch(format!(
            "inferences are {} but forward table is {}",
            direct.domain(),
            forward.domain()
        ))
        .into());
    }
    let slots = direct.slots();
    let latents = latent_space(direct.task());
    let mut score = ValidityScore { n_tuples: 0, passes: 0, tie_count: 0, unexplainable: 0 };
    for (tuple, row) in direct.iter() {
        score.n_tuples += 1;
        let best: Vec<Vec<usize>> = row.iter().map(|d| d.argmax_set()).collect();
        if best.iter().any(|b| b.len() > 1) {
            score.tie_count += 1;
        }
        if !latents.iter().any(|m| forward.produces(&m.complete(&tuple), tuple.action)) {
            score.unexplainable += 1;
        }
        let passed = combinations(&best)
            .into_iter()
            .filter_map(|choice| latent_from_choice(slots, &choice))
            .any(|m| forward.produces(&m.complete(&tuple), tuple.action));
        if passed {
            score.passes += 1;
        }
    }
    Ok(score)
}

fn combinations(sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    sets.iter().fold(vec![Vec::new()], |acc, set| {
        acc.into_iter()
            .flat_map(|prefix| {
                set.iter().map(move |&v| {
                    let mut next = prefix.clone();
                    next.push(v);
                    next
                })
            })
            .collect()
    })
}

/// `None` when the chosen attitudes are the inadmissible dislike-both pair.
fn latent_from_choice(slots: &[SlotKind], choice: &[usize]) -> Option<Latent> {
    let mut near = None;
    let mut far = None;
    let mut item1 = None;
    let mut item2 = None;
    for (slot, &v) in slots.iter().zip(choice) {
        match slot {
            SlotKind::NearContent => near = Some(Content::ALL[v]),
            SlotKind::FarContent => far = Some(Content::ALL[v]),
            SlotKind::Item1Attitude => item1 = Some(Attitude::ALL[v]),
            SlotKind::Item2Attitude => item2 = Some(Attitude::ALL[v]),
            SlotKind::Action => unreachable!("inference tables carry no action slot"),
        }
    }
    let beliefs = match (near, far) {
        (Some(n), Some(f)) => Some(BeliefState(Contents::new(n, f))),
        _ => None,
    };
    let desires = match (item1, item2) {
        (Some(a), Some(b)) => Some(validate_desire(a, b).ok()?),
        _ => None,
    };
    Some(Latent { beliefs, desires })
}

/// Does `latent` (hidden part) plus the tuple's given part produce the tuple's action?
pub fn explains(forward: &ForwardTable, tuple: &InferenceTuple, latent: &Latent) -> bool {
    forward.produces(&latent.complete(tuple), tuple.action)
}
