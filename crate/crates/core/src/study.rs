//! End-to-end runs: render every tuple, query through the archive, build
//! tables, and score the three studies.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dist::FiniteDistribution;
use crate::inversion::posterior_table;
use crate::link::{
    lookup, query_all, Archive, EndpointConfig, EndpointRespondent, LinkError, QueryRecord, RawResponse, Respondent,
    SimAgent, SimAgentConfig,
};
use crate::metrics::{
    agreement, bayesian_consistency, cross_domain_forward, cross_domain_inference, validity, CorrelationReport,
    MetricsError, DEFAULT_N_BOOT, DEFAULT_SEED,
};
use crate::models::{default_family, prediction_table, CandidateModelSpec};
use crate::prompt::{bundled_sources, load_templates, PromptError, RenderedQuery, TemplateSet};
use crate::table::{ForwardTable, InferenceTable, TableError};
use crate::world::{
    enumerate_forward_tuples, enumerate_inference_tuples, DomainId, ForwardTuple, InferenceTask, InferenceTuple, Task,
};

/// Records whose coverage falls below this are flagged as unreliable.
pub const LOW_COVERAGE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("config error: {0}")]
    Config(String),
    #[error("archive lacks {} record(s): {}", keys.len(), preview(keys))]
    MissingRecord { keys: Vec<String> },
    #[error(transparent)]
    Link(LinkError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn preview(keys: &[String]) -> String {
    let mut s = keys.iter().take(10).cloned().collect::<Vec<_>>().join(", ");
    if keys.len() > 10 {
        s.push_str(&format!(", ... ({} more)", keys.len() - 10));
    }
    s
}

impl From<LinkError> for StudyError {
    fn from(e: LinkError) -> Self {
        match e.root() {
            LinkError::Config(m) => StudyError::Config(m.clone()),
            _ => StudyError::Link(e),
        }
    }
}

impl StudyError {
    /// Process exit code: 2 for configuration problems, 3 for missing records.
    pub fn exit_code(&self) -> i32 {
        match self {
            StudyError::Config(_) => 2,
            StudyError::MissingRecord { .. } => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StudyError + '_ {
        move |source| StudyError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RespondentConfig {
    Sim(SimAgentConfig),
    Endpoint(EndpointConfig),
}

impl RespondentConfig {
    /// `(model_id, params)` as used in archive keys, without building a client.
    pub fn identity(&self) -> (String, String) {
        match self {
            RespondentConfig::Sim(c) => (format!("sim:{}", c.name), serde_json::to_string(c).expect("serializable")),
            RespondentConfig::Endpoint(c) => (c.model_id.clone(), c.params()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Respondent>, StudyError> {
        Ok(match self {
            RespondentConfig::Sim(c) => Box::new(SimAgent::new(c.clone())?),
            RespondentConfig::Endpoint(c) => Box::new(EndpointRespondent::from_env(c.clone())?),
        })
    }

    fn concurrency(&self) -> usize {
        match self {
            RespondentConfig::Sim(_) => 4,
            RespondentConfig::Endpoint(c) => c.concurrency.max(1),
        }
    }
}

fn default_domains() -> Vec<DomainId> {
    DomainId::ALL.to_vec()
}
fn default_tasks() -> Vec<Task> {
    Task::ALL.to_vec()
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_n_boot() -> usize {
    DEFAULT_N_BOOT
}
fn default_archive() -> PathBuf {
    PathBuf::from("archive.jsonl")
}
fn default_out() -> PathBuf {
    PathBuf::from("reports")
}

/// A run, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub respondent: RespondentConfig,
    #[serde(default = "default_domains")]
    pub domains: Vec<DomainId>,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    /// Directory of `*.tmpl` files; the bundled templates when absent.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default = "default_archive")]
    pub archive: PathBuf,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_n_boot")]
    pub n_boot: usize,
    /// Candidate models for the agreement study; the default family when absent.
    #[serde(default)]
    pub candidates: Option<Vec<CandidateModelSpec>>,
}

impl RunConfig {
    pub fn new(respondent: RespondentConfig) -> Self {
        RunConfig {
            respondent,
            domains: default_domains(),
            tasks: default_tasks(),
            templates: None,
            archive: default_archive(),
            out: default_out(),
            seed: default_seed(),
            n_boot: default_n_boot(),
            candidates: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, StudyError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| StudyError::Config(e.to_string()))?;
        cfg.domains.sort();
        cfg.domains.dedup();
        cfg.tasks.sort();
        cfg.tasks.dedup();
        Ok(cfg)
    }

    /// Load a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, StudyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StudyError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.archive);
        rebase(&mut cfg.out);
        if let Some(t) = cfg.templates.as_mut() {
            rebase(t);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        if self.domains.is_empty() || self.tasks.is_empty() {
            return Err(StudyError::Config("need at least one domain and one task".into()));
        }
        match &self.respondent {
            RespondentConfig::Sim(c) => {
                c.validate()?;
            }
            RespondentConfig::Endpoint(c) => c.validate()?,
        }
        if let Some(cands) = &self.candidates {
            if cands.is_empty() {
                return Err(StudyError::Config("candidate list is empty".into()));
            }
            for c in cands {
                c.validate().map_err(|e| StudyError::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Check the domains and tasks a study needs are configured.
    pub fn check_study(&self, study: StudyId) -> Result<(), StudyError> {
        let need = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(StudyError::Config(msg.into())) };
        match study {
            StudyId::Agreement => need(self.tasks.contains(&Task::Forward), "study 1 needs the forward task"),
            StudyId::Correlation => need(self.domains.len() == 2, "study 2 needs both domains"),
            StudyId::Consistency => need(
                self.tasks.contains(&Task::Forward) && self.tasks.iter().any(|t| matches!(t, Task::Inference(_))),
                "study 3 needs the forward task and at least one inference task",
            ),
        }
    }

    pub fn inference_tasks(&self) -> Vec<InferenceTask> {
        self.tasks
            .iter()
            .filter_map(|t| match t {
                Task::Inference(i) => Some(*i),
                Task::Forward => None,
            })
            .collect()
    }

    pub fn template_set(&self) -> Result<TemplateSet, StudyError> {
        Ok(match &self.templates {
            Some(dir) => load_templates(dir)?,
            None => TemplateSet::bundled(),
        })
    }

    pub fn model_candidates(&self) -> Vec<CandidateModelSpec> {
        self.candidates.clone().unwrap_or_else(default_family)
    }

    /// Hash of everything that determines report content except the archive itself.
    pub fn content_hash(&self) -> Result<String, StudyError> {
        let templates: Vec<(String, String)> = match &self.templates {
            None => bundled_sources().map(|(n, s)| (n.to_string(), s.to_string())).collect(),
            Some(dir) => {
                let mut files = Vec::new();
                for entry in std::fs::read_dir(dir).map_err(StudyError::io(dir))? {
                    let p = entry.map_err(StudyError::io(dir))?.path();
                    if p.extension().is_some_and(|e| e == "tmpl") {
                        let name = p.file_name().expect("file").to_string_lossy().into_owned();
                        files.push((name, std::fs::read_to_string(&p).map_err(StudyError::io(&p))?));
                    }
                }
                files.sort();
                files
            }
        };
        let canon = serde_json::json!({
            "respondent": self.respondent,
            "domains": self.domains,
            "tasks": self.tasks,
            "seed": self.seed,
            "n_boot": self.n_boot,
            "candidates": self.model_candidates(),
            "templates": templates,
        });
        Ok(hex::encode(Sha256::digest(canon.to_string().as_bytes())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum StudyId {
    Agreement = 1,
    Correlation = 2,
    Consistency = 3,
}

impl StudyId {
    pub const ALL: [StudyId; 3] = [StudyId::Agreement, StudyId::Correlation, StudyId::Consistency];

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl From<StudyId> for u8 {
    fn from(s: StudyId) -> u8 {
        s.number()
    }
}

impl TryFrom<u8> for StudyId {
    type Error = String;

    fn try_from(n: u8) -> Result<Self, String> {
        StudyId::ALL.into_iter().find(|s| s.number() == n).ok_or_else(|| format!("no study {n}; expected 1, 2 or 3"))
    }
}

/// Everything read back from the archive for one run.
pub struct Responses {
    pub forward: BTreeMap<DomainId, ForwardTable>,
    pub inference: BTreeMap<(DomainId, InferenceTask), InferenceTable>,
    pub coverage: Vec<CoverageSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub domain: DomainId,
    pub task: Task,
    pub records: usize,
    pub low_coverage: usize,
    pub min_coverage: f64,
}

/// Every query a run makes, in enumeration order.
pub fn run_queries(config: &RunConfig, templates: &TemplateSet) -> Vec<(DomainId, Task, RenderedQuery)> {
    let mut out = Vec::new();
    for &d in &config.domains {
        for &task in &config.tasks {
            match task {
                Task::Forward => {
                    for t in enumerate_forward_tuples(d) {
                        out.push((d, task, templates.render_forward(d, &t)));
                    }
                }
                Task::Inference(i) => {
                    for t in enumerate_inference_tuples(d, i) {
                        out.push((d, task, templates.render_inference(d, &t)));
                    }
                }
            }
        }
    }
    out
}

struct Counting<'a> {
    inner: &'a dyn Respondent,
    calls: AtomicUsize,
}

impl Respondent for Counting<'_> {
    fn model_id(&self) -> String {
        self.inner.model_id()
    }
    fn params(&self) -> String {
        self.inner.params()
    }
    fn respond(&self, q: &RenderedQuery) -> Result<RawResponse, LinkError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.respond(q)
    }
}

/// Query every configured tuple through the archive. Returns the records in
/// enumeration order and the number of queries that missed the archive.
pub fn collect_online(
    config: &RunConfig,
    respondent: &dyn Respondent,
    archive: &Archive,
) -> Result<(Vec<QueryRecord>, usize), StudyError> {
    let templates = config.template_set()?;
    let queries: Vec<RenderedQuery> = run_queries(config, &templates).into_iter().map(|(_, _, q)| q).collect();
    let counting = Counting { inner: respondent, calls: AtomicUsize::new(0) };
    let results = query_all(&counting, &queries, archive, config.respondent.concurrency());
    let records = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok((records, counting.calls.into_inner()))
}

/// Read every configured tuple from the archive without querying.
pub fn collect_offline(config: &RunConfig, archive: &Archive) -> Result<Vec<QueryRecord>, StudyError> {
    let (model_id, params) = config.respondent.identity();
    let ids = archive.model_ids();
    if !ids.is_empty() && !ids.contains(&model_id) {
        return Err(StudyError::Config(format!(
            "archive holds records from {} but the config names {model_id}",
            ids.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let templates = config.template_set()?;
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for (_, _, q) in run_queries(config, &templates) {
        match lookup(archive, &q, &model_id, &params)? {
            Some(r) => records.push(r),
            None => missing.push(q.tuple_key),
        }
    }
    if !missing.is_empty() {
        return Err(StudyError::MissingRecord { keys: missing });
    }
    Ok(records)
}

/// Assemble tables from records produced by [`collect_online`] or [`collect_offline`].
pub fn build_tables(config: &RunConfig, records: &[QueryRecord]) -> Result<Responses, StudyError> {
    let by_key: HashMap<&str, &QueryRecord> = records.iter().map(|r| (r.tuple_key.as_str(), r)).collect();
    let mut forward = BTreeMap::new();
    let mut inference = BTreeMap::new();
    let mut coverage = Vec::new();
    let (model_id, _) = config.respondent.identity();
    for &d in &config.domains {
        for &task in &config.tasks {
            let mut summary = CoverageSummary { domain: d, task, records: 0, low_coverage: 0, min_coverage: 1.0 };
            let mut fetch = |key: String| -> Result<Vec<FiniteDistribution>, StudyError> {
                let rec = by_key.get(key.as_str()).ok_or_else(|| StudyError::MissingRecord { keys: vec![key.clone()] })?;
                summary.records += 1;
                let c = rec.min_coverage();
                summary.min_coverage = summary.min_coverage.min(c);
                if c < LOW_COVERAGE {
                    summary.low_coverage += 1;
                }
                Ok(rec.distributions())
            };
            match task {
                Task::Forward => {
                    let mut map: HashMap<ForwardTuple, FiniteDistribution> = HashMap::new();
                    for t in enumerate_forward_tuples(d) {
                        let mut dists = fetch(t.key(d))?;
                        map.insert(t, dists.swap_remove(0));
                    }
                    forward.insert(d, ForwardTable::from_map(d, model_id.clone(), map)?);
                }
                Task::Inference(i) => {
                    let mut map: HashMap<InferenceTuple, Vec<FiniteDistribution>> = HashMap::new();
                    for t in enumerate_inference_tuples(d, i) {
                        map.insert(t, fetch(t.key(d))?);
                    }
                    inference.insert((d, i), InferenceTable::from_map(d, i, model_id.clone(), map)?);
                }
            }
            coverage.push(summary);
        }
    }
    Ok(Responses { forward, inference, coverage })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub archive_hash: String,
    pub model_id: String,
    pub params: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub domain: DomainId,
    pub model: String,
    pub mean_assigned_probability: f64,
    pub argmax_match_rate: f64,
    pub n_tuples: usize,
    pub low_coverage: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    /// `AP`, `I_B`, `I_D` or `I_J`.
    pub measure: String,
    /// `None` when one side is constant and r is undefined.
    pub result: Option<CorrelationReport>,
    pub formatted: String,
    pub low_coverage: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub domain: DomainId,
    pub task: InferenceTask,
    /// `None` when the direct or expected inferences are constant.
    pub bayesian_r: Option<f64>,
    pub n_pairs: usize,
    pub zero_evidence: usize,
    pub validity_accuracy: f64,
    /// Accuracy over tuples some mental state can explain.
    pub validity_explainable: Option<f64>,
    pub passes: usize,
    pub n_tuples: usize,
    pub tie_count: usize,
    pub unexplainable: usize,
    pub low_coverage: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rows", rename_all = "snake_case")]
pub enum StudyResults {
    Agreement(Vec<AgreementRow>),
    Correlation(Vec<CorrelationRow>),
    Consistency(Vec<ConsistencyRow>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: StudyId,
    pub provenance: Provenance,
    pub seed: u64,
    pub n_boot: usize,
    pub coverage: Vec<CoverageSummary>,
    pub results: StudyResults,
}

fn low_coverage(resp: &Responses, domain: Option<DomainId>, task: Task) -> usize {
    resp.coverage
        .iter()
        .filter(|c| c.task == task && domain.is_none_or(|d| c.domain == d))
        .map(|c| c.low_coverage)
        .sum()
}

fn degenerate_to_none<T>(r: Result<T, MetricsError>) -> Result<Option<T>, StudyError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_degenerate() => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Score one study from assembled tables.
pub fn score(config: &RunConfig, resp: &Responses, study: StudyId, provenance: Provenance) -> Result<StudyReport, StudyError> {
    config.check_study(study)?;
    let results = match study {
        StudyId::Agreement => {
            let mut rows = Vec::new();
            for (&d, table) in &resp.forward {
                for spec in config.model_candidates() {
                    let e = agreement(table, &prediction_table(&spec, d))?;
                    rows.push(AgreementRow {
                        domain: d,
                        model: e.model,
                        mean_assigned_probability: e.mean_assigned_probability,
                        argmax_match_rate: e.argmax_match_rate,
                        n_tuples: e.n_tuples,
                        low_coverage: low_coverage(resp, Some(d), Task::Forward),
                    });
                }
            }
            StudyResults::Agreement(rows)
        }
        StudyId::Correlation => {
            let [a, b] = DomainId::ALL;
            let mut rows = Vec::new();
            for &task in &config.tasks {
                let (measure, result) = match task {
                    Task::Forward => (
                        "AP".to_string(),
                        cross_domain_forward(&resp.forward[&a], &resp.forward[&b], config.n_boot, config.seed),
                    ),
                    Task::Inference(i) => (
                        i.measure_label().to_string(),
                        cross_domain_inference(&resp.inference[&(a, i)], &resp.inference[&(b, i)], config.n_boot, config.seed),
                    ),
                };
                let result = degenerate_to_none(result)?;
                let formatted = result.as_ref().map_or_else(|| "r = NA".to_string(), |r| r.formatted());
                rows.push(CorrelationRow { measure, result, formatted, low_coverage: low_coverage(resp, None, task) });
            }
            StudyResults::Correlation(rows)
        }
        StudyId::Consistency => {
            let mut rows = Vec::new();
            for (&d, forward) in &resp.forward {
                for task in config.inference_tasks() {
                    let direct = &resp.inference[&(d, task)];
                    let expected = posterior_table(forward, d, task).map_err(|e| StudyError::Config(e.to_string()))?;
                    let bayes = degenerate_to_none(bayesian_consistency(direct, &expected))?;
                    let v = validity(direct, forward)?;
                    rows.push(ConsistencyRow {
                        domain: d,
                        task,
                        bayesian_r: bayes.as_ref().map(|b| b.r),
                        n_pairs: bayes.as_ref().map_or(0, |b| b.n_pairs),
                        zero_evidence: expected.zero_evidence_count(),
                        validity_accuracy: v.accuracy(),
                        validity_explainable: v.explainable_accuracy(),
                        passes: v.passes,
                        n_tuples: v.n_tuples,
                        tie_count: v.tie_count,
                        unexplainable: v.unexplainable,
                        low_coverage: low_coverage(resp, Some(d), Task::Inference(task)),
                    });
                }
            }
            StudyResults::Consistency(rows)
        }
    };
    Ok(StudyReport {
        study,
        provenance,
        seed: config.seed,
        n_boot: config.n_boot,
        coverage: resp.coverage.clone(),
        results,
    })
}

fn provenance(config: &RunConfig, archive: &Archive) -> Result<Provenance, StudyError> {
    let (model_id, params) = config.respondent.identity();
    Ok(Provenance {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.content_hash()?,
        archive_hash: archive.content_hash(),
        model_id,
        params,
    })
}

/// Outcome of an online run.
pub struct RunOutcome {
    pub reports: Vec<StudyReport>,
    /// Queries that were not already archived.
    pub queries_issued: usize,
    pub records: usize,
}

/// Query (through the archive) and score the requested studies.
pub fn run_studies(
    config: &RunConfig,
    respondent: &dyn Respondent,
    archive: &Archive,
    studies: &[StudyId],
) -> Result<RunOutcome, StudyError> {
    config.validate()?;
    for &s in studies {
        config.check_study(s)?;
    }
    let (records, issued) = collect_online(config, respondent, archive)?;
    let resp = build_tables(config, &records)?;
    let prov = provenance(config, archive)?;
    let reports = studies.iter().map(|&s| score(config, &resp, s, prov.clone())).collect::<Result<_, _>>()?;
    Ok(RunOutcome { reports, queries_issued: issued, records: records.len() })
}

pub fn run_study(
    config: &RunConfig,
    respondent: &dyn Respondent,
    archive: &Archive,
    study: StudyId,
) -> Result<StudyReport, StudyError> {
    Ok(run_studies(config, respondent, archive, &[study])?.reports.remove(0))
}

/// Recompute reports from archived records only.
pub fn replay(config: &RunConfig, archive: &Archive, studies: &[StudyId]) -> Result<Vec<StudyReport>, StudyError> {
    config.validate()?;
    for &s in studies {
        config.check_study(s)?;
    }
    let records = collect_offline(config, archive)?;
    let resp = build_tables(config, &records)?;
    let prov = provenance(config, archive)?;
    studies.iter().map(|&s| score(config, &resp, s, prov.clone())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            o => Err(format!("unknown format {o:?}; expected csv or json")),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), num)
}

pub fn render_report(report: &StudyReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => render_csv(report),
    }
}

fn render_csv(report: &StudyReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let p = &report.provenance;
    let tail = [p.model_id.clone(), p.config_hash.clone(), p.archive_hash.clone()];
    let tail_header = ["model_id", "config_hash", "archive_hash"];
    let write = |w: &mut csv::Writer<Vec<u8>>, fields: Vec<String>| {
        w.write_record(fields.iter().chain(tail.iter())).expect("in-memory write");
    };
    let header = |w: &mut csv::Writer<Vec<u8>>, names: &[&str]| {
        w.write_record(names.iter().chain(tail_header.iter())).expect("in-memory write");
    };
    match &report.results {
        StudyResults::Agreement(rows) => {
            header(&mut w, &["domain", "model", "mean_assigned_probability", "argmax_match_rate", "n_tuples", "low_coverage"]);
            for r in rows {
                write(
                    &mut w,
                    vec![
                        r.domain.to_string(),
                        r.model.clone(),
                        num(r.mean_assigned_probability),
                        num(r.argmax_match_rate),
                        r.n_tuples.to_string(),
                        r.low_coverage.to_string(),
                    ],
                );
            }
        }
        StudyResults::Correlation(rows) => {
            header(
                &mut w,
                &[
                    "measure", "r", "ci_low", "ci_high", "formatted", "n_pairs", "n_tuples", "n_boot", "seed",
                    "degenerate_resamples", "low_coverage",
                ],
            );
            for r in rows {
                let c = r.result.as_ref();
                write(
                    &mut w,
                    vec![
                        r.measure.clone(),
                        opt(c.map(|c| c.r)),
                        opt(c.map(|c| c.ci_low)),
                        opt(c.map(|c| c.ci_high)),
                        r.formatted.clone(),
                        c.map_or("NA".into(), |c| c.n_pairs.to_string()),
                        c.map_or("NA".into(), |c| c.n_tuples.to_string()),
                        report.n_boot.to_string(),
                        report.seed.to_string(),
                        c.map_or("NA".into(), |c| c.degenerate_resamples.to_string()),
                        r.low_coverage.to_string(),
                    ],
                );
            }
        }
        StudyResults::Consistency(rows) => {
            header(
                &mut w,
                &[
                    "domain", "task", "bayesian_r", "n_pairs", "zero_evidence", "validity_accuracy",
                    "validity_explainable", "passes", "n_tuples", "tie_count", "unexplainable", "low_coverage",
                ],
            );
            for r in rows {
                write(
                    &mut w,
                    vec![
                        r.domain.to_string(),
                        r.task.measure_label().to_string(),
                        opt(r.bayesian_r),
                        r.n_pairs.to_string(),
                        r.zero_evidence.to_string(),
                        num(r.validity_accuracy),
                        opt(r.validity_explainable),
                        r.passes.to_string(),
                        r.n_tuples.to_string(),
                        r.tie_count.to_string(),
                        r.unexplainable.to_string(),
                        r.low_coverage.to_string(),
                    ],
                );
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Write `study<N>.<ext>` into `dir`; returns the written path.
pub fn export_report(report: &StudyReport, format: ReportFormat, dir: &Path) -> Result<PathBuf, StudyError> {
    std::fs::create_dir_all(dir).map_err(StudyError::io(dir))?;
    let path = dir.join(format!("study{}.{}", report.study.number(), format.extension()));
    std::fs::write(&path, render_report(report, format)).map_err(StudyError::io(&path))?;
    Ok(path)
}

pub fn read_report(path: &Path) -> Result<StudyReport, StudyError> {
    let text = std::fs::read_to_string(path).map_err(StudyError::io(path))?;
    serde_json::from_str(&text).map_err(|e| StudyError::Config(format!("{} is not a study report: {e}", path.display())))
}
