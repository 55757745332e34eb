//! Raw responses with token log-probabilities, and answer extraction.

use serde::{Deserialize, Serialize};

use super::LinkError;
use crate::dist::FiniteDistribution;
use crate::prompt::AnswerSlot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
    #[serde(default)]
    pub top_logprobs: Vec<TopLogprob>,
}

/// Generated text plus the per-token alternatives the endpoint reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub content: String,
    pub tokens: Vec<TokenLogprob>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub dist: FiniteDistribution,
    /// Probability mass found on the candidates before renormalizing.
    pub coverage: f64,
}

/// Byte offset of the first character of `"field": "<value>"`'s value.
fn value_offset(content: &str, field: &str) -> Option<usize> {
    let needle = format!("\"{field}\"");
    let bytes = content.as_bytes();
    let mut from = 0;
    while let Some(pos) = content[from..].find(&needle) {
        let mut i = from + pos + needle.len();
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b':' {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'"' {
                return Some(i + 1);
            }
        }
        from += pos + 1;
    }
    None
}

/// Read a slot's answer distribution off the token alternatives.
///
/// Walks the generated tokens of the answer value. At each position the
/// alternatives that are consistent with exactly one still-possible candidate
/// contribute their probability (times the probability of the path so far) to
/// that candidate. The walk continues past a position only while the
/// generated token is shared by several candidates, so for single-token
/// candidates this reads the distribution at the first diverging token.
/// Candidates that never appear get probability 0.
pub fn extract_answer_distribution(response: &RawResponse, slot: &AnswerSlot) -> Result<Extraction, LinkError> {
    let parsed: serde_json::Value = serde_json::from_str(&response.content)
        .map_err(|e| LinkError::MalformedResponse(format!("response is not JSON: {e}")))?;
    let obj = parsed
        .as_object()
        .ok_or_else(|| LinkError::MalformedResponse("response is not a JSON object".into()))?;
    match obj.get(&slot.field) {
        Some(serde_json::Value::String(_)) => {}
        _ => return Err(LinkError::SlotNotFound(slot.field.clone())),
    }
    let v0 = value_offset(&response.content, &slot.field).ok_or_else(|| LinkError::SlotNotFound(slot.field.clone()))?;

    let joined: String = response.tokens.iter().map(|t| t.token.as_str()).collect();
    if joined != response.content {
        return Err(LinkError::MalformedResponse("token texts do not reproduce the response content".into()));
    }
    let mut start = 0;
    let mut k = None;
    for (i, t) in response.tokens.iter().enumerate() {
        let end = start + t.token.len();
        if v0 < end {
            k = Some((i, start));
            break;
        }
        start = end;
    }
    let (k, k_start) = k.ok_or_else(|| LinkError::SlotNotFound(slot.field.clone()))?;
    let lead = &response.content[k_start..v0];

    let n = slot.candidates.len();
    let mut mass = vec![0.0; n];
    let mut live: Vec<usize> = (0..n).collect();
    let mut prefix = String::new();
    let mut path = 1.0;

    for (j, tok) in response.tokens.iter().enumerate().skip(k) {
        let lead = if j == k { lead } else { "" };
        let consistent = |text: &str| -> Vec<usize> {
            let Some(rest) = text.strip_prefix(lead) else { return Vec::new() };
            if rest.is_empty() {
                return Vec::new();
            }
            let s = format!("{prefix}{rest}");
            live.iter()
                .copied()
                .filter(|&c| {
                    let cand = slot.candidates[c].as_str();
                    cand.starts_with(s.as_str()) || s.strip_prefix(cand).is_some_and(|tail| tail.starts_with('"'))
                })
                .collect()
        };
        for alt in tok.top_logprobs.iter().filter(|a| a.token != tok.token) {
            if let [c] = consistent(&alt.token)[..] {
                mass[c] += path * alt.logprob.exp();
            }
        }
        let chosen = consistent(&tok.token);
        match chosen[..] {
            [] => break,
            [c] => {
                mass[c] += path * tok.logprob.exp();
                break;
            }
            _ => {
                path *= tok.logprob.exp();
                prefix.push_str(&tok.token[lead.len()..]);
                live = chosen;
            }
        }
    }

    let coverage: f64 = mass.iter().sum();
    if coverage <= 0.0 {
        return Err(LinkError::ZeroCoverage(slot.field.clone()));
    }
    let dist = FiniteDistribution::from_weights(mass).expect("positive mass");
    Ok(Extraction { dist, coverage: coverage.min(1.0) })
}
