//! Prompt templates and deterministic rendering.
//!
//! A template file has a small header followed by three sections:
//!
//! ```text
//! domain: ContainerWorld
//! task: forward
//! answer: action "container" = box | basket
//! --- system
//! ...{{schema}}...
//! --- user
//! ...{{belief_near}}...
//! --- question
//! Which container would {{character}} open?
//! ```
//!
//! `answer` lines declare one response field per latent slot with candidate
//! strings listed in canonical support order. Placeholders are `{{name}}`;
//! which ones a template may and must use depends on its task, so a prompt can
//! never mention the variable it asks about and always mentions every variable
//! it is given.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::SlotKind;
use crate::world::{Attitude, DomainId, ForwardTuple, InferenceTask, InferenceTuple, Task};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no template for {domain}/{task}")]
    MissingTemplate { domain: DomainId, task: Task },
    #[error("duplicate template for {domain}/{task}")]
    DuplicateTemplate { domain: DomainId, task: Task },
    #[error("slot mismatch: {0}")]
    SlotMismatch(String),
    #[error("{source_name}:{line}: {message}")]
    Parse { source_name: String, line: usize, message: String },
    #[error("reading templates: {0}")]
    Io(#[from] std::io::Error),
}

/// One field of the expected JSON answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSlot {
    pub kind: SlotKind,
    /// JSON key the respondent fills in.
    pub field: String,
    /// Candidate answer strings, index-aligned with the slot's support.
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Section {
    raw: String,
    segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub domain: DomainId,
    pub task: Task,
    pub answer_slots: Vec<AnswerSlot>,
    system: Section,
    user: Section,
    question: Section,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedQuery {
    pub system: String,
    pub user: String,
    pub tuple_key: String,
    pub answer_slots: Vec<AnswerSlot>,
}

const LEXICON_SLOTS: [&str; 7] = ["character", "near", "far", "item1", "item2", "both", "cost"];
const BELIEF_SLOTS: [&str; 2] = ["belief_near", "belief_far"];
const DESIRE_SLOTS: [&str; 2] = ["desire_item1", "desire_item2"];
const STATE_SLOTS: [&str; 2] = ["state_near", "state_far"];
const ACTION_SLOTS: [&str; 1] = ["action"];
const SCHEMA_SLOT: &str = "schema";

/// The given-variable placeholders a task must use; all others are forbidden.
fn required_slots(task: Task) -> Vec<&'static str> {
    let mut out: Vec<&str> = STATE_SLOTS.to_vec();
    match task {
        Task::Forward => {
            out.extend(BELIEF_SLOTS);
            out.extend(DESIRE_SLOTS);
        }
        Task::Inference(InferenceTask::BeliefInference) => {
            out.extend(DESIRE_SLOTS);
            out.extend(ACTION_SLOTS);
        }
        Task::Inference(InferenceTask::DesireInference) => {
            out.extend(BELIEF_SLOTS);
            out.extend(ACTION_SLOTS);
        }
        Task::Inference(InferenceTask::JointInference) => out.extend(ACTION_SLOTS),
    }
    out
}

fn all_given_slots() -> impl Iterator<Item = &'static str> {
    BELIEF_SLOTS.into_iter().chain(DESIRE_SLOTS).chain(STATE_SLOTS).chain(ACTION_SLOTS)
}

fn parse_segments(text: &str, source_name: &str, first_line: usize) -> Result<Vec<Segment>, PromptError> {
    let mut segments = Vec::new();
    let mut rest = text;
    let mut consumed = 0;
    while let Some(open) = rest.find("{{") {
        if open > 0 {
            segments.push(Segment::Text(rest[..open].to_string()));
        }
        let after = &rest[open + 2..];
        let line = first_line + text[..consumed + open].matches('\n').count();
        let close = after.find("}}").ok_or_else(|| PromptError::Parse {
            source_name: source_name.to_string(),
            line,
            message: "unterminated '{{' placeholder".into(),
        })?;
        let name = after[..close].trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(PromptError::Parse {
                source_name: source_name.to_string(),
                line,
                message: format!("bad placeholder name {name:?}"),
            });
        }
        segments.push(Segment::Slot(name.to_string()));
        consumed += open + 2 + close + 2;
        rest = &after[close + 2..];
    }
    if !rest.is_empty() {
        segments.push(Segment::Text(rest.to_string()));
    }
    Ok(segments)
}

impl Section {
    fn slots(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot(n) => Some(n.as_str()),
            Segment::Text(_) => None,
        })
    }

    fn render(&self, values: &BTreeMap<&str, String>) -> String {
        let mut out = String::with_capacity(self.raw.len() + 64);
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(n) => out.push_str(&values[n.as_str()]),
            }
        }
        out
    }
}

fn parse_answer_line(value: &str) -> Option<AnswerSlot> {
    let (lhs, rhs) = value.split_once('=')?;
    let lhs = lhs.trim();
    let (kind, field) = lhs.split_once(char::is_whitespace)?;
    let kind = SlotKind::from_name(kind.trim())?;
    let field = field.trim().strip_prefix('"')?.strip_suffix('"')?.to_string();
    let candidates = rhs.split('|').map(|c| c.trim().to_string()).collect();
    Some(AnswerSlot { kind, field, candidates })
}

impl PromptTemplate {
    /// Parse and validate one template file.
    pub fn parse(text: &str, source_name: &str) -> Result<Self, PromptError> {
        let perr = |line: usize, message: String| PromptError::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut domain = None;
        let mut task = None;
        let mut answers = Vec::new();
        let mut sections: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut current: Option<String> = None;

        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if let Some(name) = line.strip_prefix("---") {
                let name = name.trim().to_string();
                if !["system", "user", "question"].contains(&name.as_str()) {
                    return Err(perr(lineno, format!("unknown section {name:?}")));
                }
                if sections.contains_key(&name) {
                    return Err(perr(lineno, format!("section {name:?} repeated")));
                }
                sections.insert(name.clone(), (lineno + 1, String::new()));
                current = Some(name);
                continue;
            }
            match &current {
                Some(name) => {
                    let body = &mut sections.get_mut(name).expect("inserted").1;
                    body.push_str(line);
                    body.push('\n');
                }
                None => {
                    let trimmed = line.trim();
                    if trimmed.is_empty() || trimmed.starts_with('#') {
                        continue;
                    }
                    let (key, value) = trimmed
                        .split_once(':')
                        .ok_or_else(|| perr(lineno, format!("expected 'key: value', got {trimmed:?}")))?;
                    let value = value.trim();
                    match key.trim() {
                        "domain" => domain = Some(value.parse::<DomainId>().map_err(|e| perr(lineno, e))?),
                        "task" => task = Some(value.parse::<Task>().map_err(|e| perr(lineno, e))?),
                        "answer" => answers.push(
                            parse_answer_line(value)
                                .ok_or_else(|| perr(lineno, format!("malformed answer line {value:?}")))?,
                        ),
                        other => return Err(perr(lineno, format!("unknown header key {other:?}"))),
                    }
                }
            }
        }

        let domain = domain.ok_or_else(|| perr(1, "missing 'domain' header".into()))?;
        let task = task.ok_or_else(|| perr(1, "missing 'task' header".into()))?;
        let mut section = |name: &str| -> Result<Section, PromptError> {
            let (line, raw) = sections
                .remove(name)
                .ok_or_else(|| perr(text.lines().count(), format!("missing section '--- {name}'")))?;
            let raw = raw.trim().to_string();
            let segments = parse_segments(&raw, source_name, line)?;
            Ok(Section { raw, segments })
        };
        let system = section("system")?;
        let user = section("user")?;
        let question = section("question")?;

        let template = PromptTemplate { domain, task, answer_slots: answers, system, user, question };
        template.validate()
    }

    fn validate(mut self) -> Result<Self, PromptError> {
        let mismatch = |m: String| PromptError::SlotMismatch(format!("{}/{}: {m}", self.domain, self.task));

        // Answer slots: exactly the task's slots, each with a full candidate list.
        let wanted = SlotKind::for_task(self.task);
        let mut ordered = Vec::with_capacity(wanted.len());
        for kind in wanted {
            let mut found = self.answer_slots.iter().filter(|a| a.kind == *kind);
            let slot = found.next().ok_or_else(|| mismatch(format!("no answer line for slot {kind}")))?;
            if found.next().is_some() {
                return Err(mismatch(format!("slot {kind} declared twice")));
            }
            if slot.candidates.len() != kind.support_size() {
                return Err(mismatch(format!(
                    "slot {kind} needs {} candidates, got {}",
                    kind.support_size(),
                    slot.candidates.len()
                )));
            }
            let mut seen = slot.candidates.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != slot.candidates.len() || slot.candidates.iter().any(|c| c.is_empty() || c.contains('"')) {
                return Err(mismatch(format!("slot {kind} candidates must be distinct, nonempty and unquoted")));
            }
            if slot.field.is_empty() || slot.field.contains('"') {
                return Err(mismatch(format!("slot {kind} has an invalid field name")));
            }
            ordered.push(slot.clone());
        }
        if let Some(extra) = self.answer_slots.iter().find(|a| !wanted.contains(&a.kind)) {
            return Err(mismatch(format!("slot {} does not belong to this task", extra.kind)));
        }
        let mut fields: Vec<&str> = ordered.iter().map(|a| a.field.as_str()).collect();
        fields.sort();
        fields.dedup();
        if fields.len() != ordered.len() {
            return Err(mismatch("answer fields must be distinct".into()));
        }

        // Placeholders.
        let required = required_slots(self.task);
        let mut used: Vec<&str> = Vec::new();
        for (name, section) in [("system", &self.system), ("user", &self.user), ("question", &self.question)] {
            for slot in section.slots() {
                let known = LEXICON_SLOTS.contains(&slot) || all_given_slots().any(|g| g == slot);
                if slot == SCHEMA_SLOT {
                    if name != "system" {
                        return Err(mismatch("{{schema}} may only appear in the system section".into()));
                    }
                } else if !known {
                    return Err(mismatch(format!("undefined slot {{{{{slot}}}}} in {name} section")));
                } else if all_given_slots().any(|g| g == slot) && !required.contains(&slot) {
                    return Err(mismatch(format!("{{{{{slot}}}}} reveals a variable this task hides")));
                }
                used.push(slot);
            }
        }
        if !self.system.slots().any(|s| s == SCHEMA_SLOT) {
            return Err(mismatch("system section must contain {{schema}}".into()));
        }
        if let Some(missing) = required.iter().find(|r| !used.contains(r)) {
            return Err(mismatch(format!("given variable {{{{{missing}}}}} is never mentioned")));
        }

        self.answer_slots = ordered;
        Ok(self)
    }

    fn schema_text(&self) -> String {
        let fields: Vec<String> = self
            .answer_slots
            .iter()
            .map(|a| {
                let options: Vec<String> = a.candidates.iter().map(|c| format!("\"{c}\"")).collect();
                format!("\"{}\": {}", a.field, options.join(" | "))
            })
            .collect();
        format!(
            "Respond with a single JSON object and nothing else, in exactly this form:\n{{{}}}\nEach value must be one of the listed options, copied exactly.",
            fields.join(", ")
        )
    }

    fn base_values(&self) -> BTreeMap<&'static str, String> {
        let lex = self.domain.lexicon();
        let mut v = BTreeMap::new();
        v.insert("character", lex.character_name.to_string());
        v.insert("near", lex.near_label.to_string());
        v.insert("far", lex.far_label.to_string());
        v.insert("item1", lex.item1_label.to_string());
        v.insert("item2", lex.item2_label.to_string());
        v.insert("both", lex.both_label.to_string());
        v.insert("cost", lex.cost_narrative.to_string());
        v.insert(SCHEMA_SLOT, self.schema_text());
        v
    }

    fn render(&self, values: &BTreeMap<&str, String>, tuple_key: String) -> RenderedQuery {
        let system = self.system.render(values);
        let user = format!("{}\n\n{}", self.user.render(values), self.question.render(values));
        RenderedQuery { system, user, tuple_key, answer_slots: self.answer_slots.clone() }
    }

    pub fn question(&self) -> &str {
        &self.question.raw
    }
}

fn attitude_word(a: Attitude) -> &'static str {
    match a {
        Attitude::Like => "likes",
        Attitude::Dislike => "dislikes",
    }
}

fn check_target(template: &PromptTemplate, domain: DomainId, task: Task) -> Result<(), PromptError> {
    if template.domain != domain || template.task != task {
        return Err(PromptError::SlotMismatch(format!(
            "template is for {}/{} but the query is {}/{}",
            template.domain, template.task, domain, task
        )));
    }
    Ok(())
}

pub fn render_forward(
    domain: DomainId,
    tuple: &ForwardTuple,
    template: &PromptTemplate,
) -> Result<RenderedQuery, PromptError> {
    check_target(template, domain, Task::Forward)?;
    let lex = domain.lexicon();
    let mut v = template.base_values();
    v.insert("belief_near", lex.content_label(tuple.beliefs.0.near).to_string());
    v.insert("belief_far", lex.content_label(tuple.beliefs.0.far).to_string());
    v.insert("desire_item1", attitude_word(tuple.desires.item1()).to_string());
    v.insert("desire_item2", attitude_word(tuple.desires.item2()).to_string());
    v.insert("state_near", lex.content_label(tuple.state.0.near).to_string());
    v.insert("state_far", lex.content_label(tuple.state.0.far).to_string());
    Ok(template.render(&v, tuple.key(domain)))
}

pub fn render_inference(
    domain: DomainId,
    tuple: &InferenceTuple,
    template: &PromptTemplate,
) -> Result<RenderedQuery, PromptError> {
    check_target(template, domain, Task::Inference(tuple.task))?;
    let lex = domain.lexicon();
    let mut v = template.base_values();
    if let Some(b) = tuple.given_beliefs {
        v.insert("belief_near", lex.content_label(b.0.near).to_string());
        v.insert("belief_far", lex.content_label(b.0.far).to_string());
    }
    if let Some(d) = tuple.given_desires {
        v.insert("desire_item1", attitude_word(d.item1()).to_string());
        v.insert("desire_item2", attitude_word(d.item2()).to_string());
    }
    v.insert("state_near", lex.content_label(tuple.state.0.near).to_string());
    v.insert("state_far", lex.content_label(tuple.state.0.far).to_string());
    v.insert("action", lex.action_label(tuple.action).to_string());
    Ok(template.render(&v, tuple.key(domain)))
}

/// Validated templates for every (domain, task) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<(DomainId, Task), PromptTemplate>,
}

const BUNDLED: [(&str, &str); 8] = [
    ("cw_forward.tmpl", include_str!("../templates/cw_forward.tmpl")),
    ("cw_belief.tmpl", include_str!("../templates/cw_belief.tmpl")),
    ("cw_desire.tmpl", include_str!("../templates/cw_desire.tmpl")),
    ("cw_joint.tmpl", include_str!("../templates/cw_joint.tmpl")),
    ("mw_forward.tmpl", include_str!("../templates/mw_forward.tmpl")),
    ("mw_belief.tmpl", include_str!("../templates/mw_belief.tmpl")),
    ("mw_desire.tmpl", include_str!("../templates/mw_desire.tmpl")),
    ("mw_joint.tmpl", include_str!("../templates/mw_joint.tmpl")),
];

impl TemplateSet {
    pub fn bundled() -> Self {
        Self::from_sources(BUNDLED.iter().map(|(n, t)| (n.to_string(), t.to_string())))
            .expect("bundled templates are valid")
    }

    /// Parse named template sources; every (domain, task) pair must be covered once.
    pub fn from_sources(sources: impl IntoIterator<Item = (String, String)>) -> Result<Self, PromptError> {
        let mut templates = BTreeMap::new();
        for (name, text) in sources {
            let t = PromptTemplate::parse(&text, &name)?;
            let key = (t.domain, t.task);
            if templates.insert(key, t).is_some() {
                return Err(PromptError::DuplicateTemplate { domain: key.0, task: key.1 });
            }
        }
        for domain in DomainId::ALL {
            for task in Task::ALL {
                if !templates.contains_key(&(domain, task)) {
                    return Err(PromptError::MissingTemplate { domain, task });
                }
            }
        }
        Ok(TemplateSet { templates })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, domain: DomainId, task: Task) -> &PromptTemplate {
        &self.templates[&(domain, task)]
    }

    pub fn render_forward(&self, domain: DomainId, tuple: &ForwardTuple) -> RenderedQuery {
        render_forward(domain, tuple, self.get(domain, Task::Forward)).expect("template matches its key")
    }

    pub fn render_inference(&self, domain: DomainId, tuple: &InferenceTuple) -> RenderedQuery {
        render_inference(domain, tuple, self.get(domain, Task::Inference(tuple.task)))
            .expect("template matches its key")
    }
}

/// Load every `*.tmpl` file in a directory.
pub fn load_templates(dir: &Path) -> Result<TemplateSet, PromptError> {
    let mut entries: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "tmpl"))
        .collect();
    entries.sort();
    let mut sources = Vec::with_capacity(entries.len());
    for path in entries {
        let text = fs::read_to_string(&path)?;
        sources.push((path.display().to_string(), text));
    }
    TemplateSet::from_sources(sources)
}

pub fn bundled_sources() -> impl Iterator<Item = (&'static str, &'static str)> {
    BUNDLED.into_iter()
}
