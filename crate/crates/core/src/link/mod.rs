//! Querying respondents, archiving their answers, and reading answer distributions.

mod archive;
mod client;
mod response;
mod sim;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

pub use archive::{cached_query, lookup, prompt_hash, query_hash, Archive, ExtractedSlot, QueryRecord};
pub use client::{EndpointConfig, EndpointRespondent, API_KEY_ENV};
pub use response::{extract_answer_distribution, Extraction, RawResponse, TokenLogprob, TopLogprob};
pub use sim::{simulate_forward, simulate_inference, InferenceMode, ModelChoice, SimAgent, SimAgentConfig};

use crate::prompt::RenderedQuery;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    TransportError { attempts: u32, message: String },
    #[error("endpoint rejected credentials (HTTP {0})")]
    AuthError(u16),
    #[error("response carries no token log-probabilities")]
    MissingLogprobs,
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("answer slot \"{0}\" not found in response")]
    SlotNotFound(String),
    #[error("no candidate for slot \"{0}\" appears among the token alternatives")]
    ZeroCoverage(String),
    #[error("archive row {line} is corrupt: {reason}")]
    CacheCorrupt { line: usize, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{tuple}: {source}")]
    InTuple {
        tuple: String,
        #[source]
        source: Box<LinkError>,
    },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl LinkError {
    /// Attach the tuple being queried.
    pub fn for_tuple(self, tuple: &str) -> LinkError {
        match self {
            e @ LinkError::InTuple { .. } => e,
            e => LinkError::InTuple { tuple: tuple.to_string(), source: Box::new(e) },
        }
    }

    /// The error underneath any tuple context.
    pub fn root(&self) -> &LinkError {
        match self {
            LinkError::InTuple { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Anything that can answer a rendered query with token log-probabilities.
pub trait Respondent: Sync {
    /// Stable identifier, part of the archive key.
    fn model_id(&self) -> String;
    /// Canonical sampling parameters, part of the archive key.
    fn params(&self) -> String;
    fn respond(&self, query: &RenderedQuery) -> Result<RawResponse, LinkError>;
}

/// Run every query through the archive with at most `concurrency` in flight.
/// Results come back in input order.
pub fn query_all(
    respondent: &dyn Respondent,
    queries: &[RenderedQuery],
    archive: &Archive,
    concurrency: usize,
) -> Vec<Result<QueryRecord, LinkError>> {
    let workers = concurrency.max(1).min(queries.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<QueryRecord, LinkError>>>> =
        Mutex::new((0..queries.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(q) = queries.get(i) else { break };
                let r = cached_query(respondent, q, archive);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results.into_inner().expect("results lock").into_iter().map(|r| r.expect("every query ran")).collect()
}
