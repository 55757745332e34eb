//! OpenAI-compatible chat-completions endpoint with log-probabilities.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::response::{RawResponse, TokenLogprob};
use super::{LinkError, Respondent};
use crate::prompt::RenderedQuery;

pub const API_KEY_ENV: &str = "MINDPROBE_API_KEY";

fn default_temperature() -> f64 {
    1.0
}
fn default_top_p() -> f64 {
    1.0
}
fn default_top_logprobs() -> u8 {
    20
}
fn default_max_tokens() -> u32 {
    256
}
fn default_max_attempts() -> u32 {
    5
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// e.g. `https://api.example.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model_id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_top_logprobs")]
    pub top_logprobs: u8,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    /// First retry delay; doubles on each further attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub requests_per_second: Option<f64>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

impl EndpointConfig {
    pub fn new(base_url: &str, model_id: &str) -> Self {
        EndpointConfig {
            base_url: base_url.to_string(),
            model_id: model_id.to_string(),
            temperature: default_temperature(),
            top_p: default_top_p(),
            top_logprobs: default_top_logprobs(),
            max_tokens: default_max_tokens(),
            max_attempts: default_max_attempts(),
            backoff_ms: default_backoff_ms(),
            timeout_secs: default_timeout_secs(),
            requests_per_second: None,
            concurrency: default_concurrency(),
        }
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        let bad = |m: String| Err(LinkError::Config(m));
        if self.base_url.is_empty() || self.model_id.is_empty() {
            return bad("endpoint needs base_url and model_id".into());
        }
        if !(5..=20).contains(&self.top_logprobs) {
            return bad(format!("top_logprobs must be between 5 and 20, got {}", self.top_logprobs));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be nonnegative, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1".into());
        }
        if self.requests_per_second.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
            return bad("requests_per_second must be positive".into());
        }
        Ok(())
    }

    /// Canonical parameter string; part of the archive key.
    pub fn params(&self) -> String {
        format!(
            "temperature={};top_p={};top_logprobs={};max_tokens={};response_format=json_object",
            self.temperature, self.top_p, self.top_logprobs, self.max_tokens
        )
    }
}

/// Spaces requests at least `interval` apart across threads.
struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn wait(&self) {
        let Some(interval) = self.interval else { return };
        let slot = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

pub struct EndpointRespondent {
    config: EndpointConfig,
    api_key: String,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl EndpointRespondent {
    /// Build from config, reading the key from `MINDPROBE_API_KEY`.
    pub fn from_env(config: EndpointConfig) -> Result<Self, LinkError> {
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| LinkError::Config(format!("{API_KEY_ENV} is not set")))?;
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: EndpointConfig, api_key: String) -> Result<Self, LinkError> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        let limiter = RateLimiter {
            interval: config.requests_per_second.map(|r| Duration::from_secs_f64(1.0 / r)),
            next: Mutex::new(None),
        };
        Ok(EndpointRespondent { config, api_key, agent, limiter })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn request_body(&self, query: &RenderedQuery) -> serde_json::Value {
        json!({
            "model": self.config.model_id,
            "messages": [
                {"role": "system", "content": query.system},
                {"role": "user", "content": query.user},
            ],
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
            "max_tokens": self.config.max_tokens,
            "logprobs": true,
            "top_logprobs": self.config.top_logprobs,
            "response_format": {"type": "json_object"},
        })
    }

    fn attempt(&self, url: &str, body: &str) -> Result<(u16, String), String> {
        self.limiter.wait();
        let mut resp = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((status, text))
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

pub(crate) fn parse_completion(text: &str) -> Result<RawResponse, LinkError> {
    let c: Completion =
        serde_json::from_str(text).map_err(|e| LinkError::MalformedResponse(format!("completion: {e}")))?;
    let choice = c.choices.into_iter().next().ok_or_else(|| LinkError::MalformedResponse("no choices".into()))?;
    let content = choice.message.content.ok_or_else(|| LinkError::MalformedResponse("no message content".into()))?;
    let tokens = choice.logprobs.and_then(|l| l.content).filter(|t| !t.is_empty()).ok_or(LinkError::MissingLogprobs)?;
    if tokens.iter().all(|t| t.top_logprobs.is_empty()) {
        return Err(LinkError::MissingLogprobs);
    }
    Ok(RawResponse { content, tokens })
}

impl Respondent for EndpointRespondent {
    fn model_id(&self) -> String {
        self.config.model_id.clone()
    }

    fn params(&self) -> String {
        self.config.params()
    }

    fn respond(&self, query: &RenderedQuery) -> Result<RawResponse, LinkError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = self.request_body(query).to_string();
        let mut last = String::new();
        for attempt in 0..self.config.max_attempts {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&url, &body) {
                Ok((200..=299, text)) => return parse_completion(&text),
                Ok((s @ (401 | 403), _)) => return Err(LinkError::AuthError(s)),
                Ok((s, text)) if s == 429 || s >= 500 => last = format!("HTTP {s}: {}", snippet(&text)),
                Ok((s, text)) => return Err(LinkError::MalformedResponse(format!("HTTP {s}: {}", snippet(&text)))),
                Err(e) => last = e,
            }
        }
        Err(LinkError::TransportError { attempts: self.config.max_attempts, message: last })
    }
}

fn snippet(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
