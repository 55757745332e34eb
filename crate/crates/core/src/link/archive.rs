//! JSONL archive of query records, doubling as the response cache.

use std::collections::{BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::response::{extract_answer_distribution, TokenLogprob};
use super::{LinkError, Respondent};
use crate::dist::FiniteDistribution;
use crate::prompt::RenderedQuery;
use crate::table::SlotKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedSlot {
    pub slot: SlotKind,
    pub field: String,
    pub candidates: Vec<String>,
    pub probs: Vec<f64>,
}

/// One archived query: what was asked, what came back, and what was read off it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub tuple_key: String,
    pub prompt_hash: String,
    pub model_id: String,
    pub params: String,
    pub system: String,
    pub user: String,
    pub raw_response: String,
    pub token_logprobs: Vec<TokenLogprob>,
    pub extracted: Vec<ExtractedSlot>,
    pub coverage: Vec<f64>,
    pub timestamp: u64,
}

impl QueryRecord {
    pub fn distributions(&self) -> Vec<FiniteDistribution> {
        self.extracted.iter().map(|s| FiniteDistribution::from_weights(s.probs.clone()).expect("stored normalized")).collect()
    }

    pub fn min_coverage(&self) -> f64 {
        self.coverage.iter().cloned().fold(1.0, f64::min)
    }
}

fn well_formed(s: &ExtractedSlot) -> bool {
    s.probs.len() == s.candidates.len()
        && s.probs.iter().all(|p| p.is_finite() && *p >= 0.0)
        && (s.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

pub fn prompt_hash(system: &str, user: &str, model_id: &str, params: &str) -> String {
    let mut h = Sha256::new();
    for part in ["mindprobe-query-v1", model_id, params, system, user] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

struct State {
    lines: HashMap<String, String>,
    order: Vec<String>,
    file: Option<File>,
}

/// Append-only record store keyed by prompt hash.
pub struct Archive {
    path: Option<PathBuf>,
    state: Mutex<State>,
}

impl Archive {
    pub fn in_memory() -> Self {
        Archive { path: None, state: Mutex::new(State { lines: HashMap::new(), order: Vec::new(), file: None }) }
    }

    /// Open (creating if needed) an archive file and verify every stored row.
    pub fn open(path: &Path) -> Result<Self, LinkError> {
        let mut lines = HashMap::new();
        let mut order = Vec::new();
        if path.exists() {
            let data = std::fs::read(path)?;
            let raw: Vec<&[u8]> = data.split(|b| *b == b'\n').collect();
            // A file ending mid-row has no trailing newline.
            if data.last().is_some_and(|b| *b != b'\n') {
                return Err(LinkError::CacheCorrupt { line: raw.len(), reason: "truncated final row".into() });
            }
            for (i, bytes) in raw.iter().enumerate() {
                let lineno = i + 1;
                let corrupt = |reason: String| LinkError::CacheCorrupt { line: lineno, reason };
                let line = String::from_utf8(bytes.to_vec()).map_err(|_| corrupt("not UTF-8".into()))?;
                if line.is_empty() {
                    continue;
                }
                let rec: QueryRecord = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
                let expected = prompt_hash(&rec.system, &rec.user, &rec.model_id, &rec.params);
                if expected != rec.prompt_hash {
                    return Err(corrupt(format!("stored hash {} does not match its prompt", rec.prompt_hash)));
                }
                if let Some(s) = rec.extracted.iter().find(|s| !well_formed(s)) {
                    return Err(corrupt(format!("extracted distribution for {} is not normalized", s.field)));
                }
                if rec.coverage.iter().any(|c| !(0.0..=1.0).contains(c)) {
                    return Err(corrupt("coverage outside [0, 1]".into()));
                }
                if !lines.contains_key(&rec.prompt_hash) {
                    order.push(rec.prompt_hash.clone());
                    lines.insert(rec.prompt_hash, line);
                }
            }
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Archive { path: Some(path.to_path_buf()), state: Mutex::new(State { lines, order, file: Some(file) }) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("archive lock").order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, hash: &str) -> Option<QueryRecord> {
        let st = self.state.lock().expect("archive lock");
        st.lines.get(hash).map(|l| serde_json::from_str(l).expect("verified on insert"))
    }

    /// The stored JSONL row for a hash, exactly as written.
    pub fn raw_line(&self, hash: &str) -> Option<String> {
        self.state.lock().expect("archive lock").lines.get(hash).cloned()
    }

    pub fn model_ids(&self) -> BTreeSet<String> {
        let st = self.state.lock().expect("archive lock");
        st.order
            .iter()
            .map(|h| serde_json::from_str::<QueryRecord>(&st.lines[h]).expect("verified").model_id)
            .collect()
    }

    /// SHA-256 over the stored rows in hash order, independent of append order.
    pub fn content_hash(&self) -> String {
        let st = self.state.lock().expect("archive lock");
        let mut hashes: Vec<&String> = st.order.iter().collect();
        hashes.sort();
        let mut h = Sha256::new();
        for k in hashes {
            h.update(st.lines[k].as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Store `record` unless its hash is already present; returns the stored record.
    fn insert(&self, record: &QueryRecord) -> Result<QueryRecord, LinkError> {
        let line = serde_json::to_string(record).map_err(|e| LinkError::MalformedResponse(e.to_string()))?;
        let mut st = self.state.lock().expect("archive lock");
        if let Some(existing) = st.lines.get(&record.prompt_hash) {
            return Ok(serde_json::from_str(existing).expect("verified"));
        }
        if let Some(f) = st.file.as_mut() {
            f.write_all(format!("{line}\n").as_bytes())?;
            f.flush()?;
        }
        st.order.push(record.prompt_hash.clone());
        st.lines.insert(record.prompt_hash.clone(), line.clone());
        Ok(serde_json::from_str(&line).expect("just serialized"))
    }
}

/// Hash under which a query to `respondent` is archived.
pub fn query_hash(respondent: &dyn Respondent, query: &RenderedQuery) -> String {
    prompt_hash(&query.system, &query.user, &respondent.model_id(), &respondent.params())
}

/// Look a query up without contacting anyone.
pub fn lookup(
    archive: &Archive,
    query: &RenderedQuery,
    model_id: &str,
    params: &str,
) -> Result<Option<QueryRecord>, LinkError> {
    let hash = prompt_hash(&query.system, &query.user, model_id, params);
    match archive.get(&hash) {
        Some(rec) if rec.tuple_key != query.tuple_key => Err(LinkError::CacheCorrupt {
            line: 0,
            reason: format!("record {hash} is for {} but was looked up for {}", rec.tuple_key, query.tuple_key),
        }),
        other => Ok(other),
    }
}

/// Replay an archived answer or, on a miss, ask the respondent and archive the result.
pub fn cached_query(
    respondent: &dyn Respondent,
    query: &RenderedQuery,
    archive: &Archive,
) -> Result<QueryRecord, LinkError> {
    let model_id = respondent.model_id();
    let params = respondent.params();
    if let Some(hit) = lookup(archive, query, &model_id, &params)? {
        return Ok(hit);
    }
    let raw = respondent.respond(query)?;
    let mut extracted = Vec::with_capacity(query.answer_slots.len());
    let mut coverage = Vec::with_capacity(query.answer_slots.len());
    for slot in &query.answer_slots {
        let e = extract_answer_distribution(&raw, slot).map_err(|e| e.for_tuple(&query.tuple_key))?;
        coverage.push(e.coverage);
        extracted.push(ExtractedSlot {
            slot: slot.kind,
            field: slot.field.clone(),
            candidates: slot.candidates.clone(),
            probs: e.dist.into_inner(),
        });
    }
    let record = QueryRecord {
        tuple_key: query.tuple_key.clone(),
        prompt_hash: prompt_hash(&query.system, &query.user, &model_id, &params),
        model_id,
        params,
        system: query.system.clone(),
        user: query.user.clone(),
        raw_response: raw.content,
        token_logprobs: raw.tokens,
        extracted,
        coverage,
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    archive.insert(&record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::{SimAgent, SimAgentConfig};
    use crate::prompt::TemplateSet;
    use crate::world::{enumerate_forward_tuples, DomainId};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        inner: SimAgent,
        calls: AtomicUsize,
    }

    impl Respondent for Counting {
        fn model_id(&self) -> String {
            self.inner.model_id()
        }
        fn params(&self) -> String {
            self.inner.params()
        }
        fn respond(&self, q: &RenderedQuery) -> Result<super::super::RawResponse, LinkError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.respond(q)
        }
    }

    fn counting(tau: f64) -> Counting {
        let cfg = SimAgentConfig { softmax_temperature: tau, ..Default::default() };
        Counting { inner: SimAgent::new(cfg).unwrap(), calls: AtomicUsize::new(0) }
    }

    fn queries(n: usize) -> Vec<RenderedQuery> {
        let ts = TemplateSet::bundled();
        enumerate_forward_tuples(DomainId::ContainerWorld)
            .iter()
            .take(n)
            .map(|t| ts.render_forward(DomainId::ContainerWorld, t))
            .collect()
    }

    #[test]
    fn hit_replays_without_calling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let r = counting(1.0);
        let q = &queries(1)[0];
        let first = {
            let archive = Archive::open(&path).unwrap();
            cached_query(&r, q, &archive).unwrap()
        };
        let archive = Archive::open(&path).unwrap();
        let hash = query_hash(&r, q);
        let line = archive.raw_line(&hash).unwrap();
        let second = cached_query(&r, q, &archive).unwrap();
        assert_eq!(first, second);
        assert_eq!(r.calls.load(Ordering::SeqCst), 1);
        assert_eq!(serde_json::to_string(&second).unwrap(), line);
        assert_eq!(archive.len(), 1);
    }

    #[test]
    fn changed_params_miss() {
        let archive = Archive::in_memory();
        let q = &queries(1)[0];
        let (a, b) = (counting(1.0), counting(2.0));
        let ra = cached_query(&a, q, &archive).unwrap();
        let rb = cached_query(&b, q, &archive).unwrap();
        assert_ne!(ra.prompt_hash, rb.prompt_hash);
        assert_eq!(archive.len(), 2);
    }

    #[test]
    fn truncated_row_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        {
            let archive = Archive::open(&path).unwrap();
            let r = counting(1.0);
            for q in queries(3) {
                cached_query(&r, &q, &archive).unwrap();
            }
        }
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() - 40]).unwrap();
        match Archive::open(&path) {
            Err(LinkError::CacheCorrupt { line: 3, .. }) => {}
            Err(e) => panic!("wrong error {e}"),
            Ok(_) => panic!("truncated archive opened"),
        }
    }

    #[test]
    fn tampered_prompt_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        {
            let archive = Archive::open(&path).unwrap();
            cached_query(&counting(1.0), &queries(1)[0], &archive).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap().replace("Jason", "Mason");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(Archive::open(&path), Err(LinkError::CacheCorrupt { line: 1, .. })));
    }

    #[test]
    fn content_hash_ignores_append_order() {
        let r = counting(1.0);
        let qs = queries(4);
        let (a, b) = (Archive::in_memory(), Archive::in_memory());
        for q in &qs {
            cached_query(&r, q, &a).unwrap();
        }
        for q in qs.iter().rev() {
            cached_query(&r, q, &b).unwrap();
        }
        // Timestamps are second-resolution; rows written in the same second match.
        let same_rows = qs.iter().all(|q| {
            let h = query_hash(&r, q);
            a.raw_line(&h) == b.raw_line(&h)
        });
        if same_rows {
            assert_eq!(a.content_hash(), b.content_hash());
        }
    }

    #[test]
    fn concurrent_fan_out_queries_each_once() {
        let r = counting(0.5);
        let qs = queries(40);
        let archive = Archive::in_memory();
        let out = crate::link::query_all(&r, &qs, &archive, 8);
        assert!(out.iter().all(|o| o.is_ok()));
        for (q, rec) in qs.iter().zip(&out) {
            assert_eq!(rec.as_ref().unwrap().tuple_key, q.tuple_key);
        }
        assert_eq!(r.calls.load(Ordering::SeqCst), 40);
        crate::link::query_all(&r, &qs, &archive, 8);
        assert_eq!(r.calls.load(Ordering::SeqCst), 40);
    }
}
