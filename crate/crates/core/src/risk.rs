//! Risk labelling: Act excerpts, the judge prompt, response parsing and tier shares.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chat::{ChatRequest, RequestError, ResponseHint};
use crate::json_text::{first_value, normalize_key, snippet};
use crate::model::{ActCitation, ModelError, RiskAssessment, RiskTier, TechnologyUse, UseId};

const REFERENCE_EXCERPTS: &str = include_str!("../data/act_excerpts.txt");

pub const JUDGE_ROLE: &str = "Experienced Judge";
pub const DEFAULT_RISK_TEMPERATURE: f64 = 0.0;

// ---------------------------------------------------------------- locations

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric()
}

fn skip_spaces(b: &[u8], mut i: usize) -> usize {
    while i < b.len() && (b[i] == b' ' || b[i] == b'\t' || b[i] == b'\n' || b[i] == b'\r') {
        i += 1;
    }
    i
}

fn take_digits(b: &[u8], mut i: usize) -> (usize, usize) {
    let start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    (start, i)
}

/// Consumes `(x)(y)...` groups of alphanumerics directly after a number.
fn take_groups(b: &[u8], mut i: usize) -> usize {
    loop {
        if i < b.len() && b[i] == b'(' {
            let mut j = i + 1;
            while j < b.len() && b[j].is_ascii_alphanumeric() {
                j += 1;
            }
            if j > i + 1 && j < b.len() && b[j] == b')' {
                i = j + 1;
                continue;
            }
        }
        return i;
    }
}

fn keyword_at(lower: &[u8], i: usize, kw: &str) -> bool {
    lower[i..].starts_with(kw.as_bytes())
        && (i == 0 || !is_word_byte(lower[i - 1]))
        && lower.get(i + kw.len()).is_some_and(|c| c.is_ascii_whitespace())
}

/// Article/Annex/Amendment references in `text`, normalized and deduplicated
/// in order of first appearance. `Annex III, Section 1(a)` becomes
/// `Annex III Section 1(a)`.
pub fn act_locations(text: &str) -> Vec<String> {
    let raw = text.as_bytes();
    let lower = text.to_ascii_lowercase();
    let lower = lower.as_bytes();
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < lower.len() {
        let mut found: Option<(String, usize)> = None;
        if keyword_at(lower, i, "article") {
            let (s, e) = take_digits(raw, skip_spaces(raw, i + 7));
            if e > s {
                let g = take_groups(raw, e);
                found = Some((format!("Article {}", &text[s..g]), g));
            }
        } else if keyword_at(lower, i, "amendment") {
            let (s, e) = take_digits(raw, skip_spaces(raw, i + 9));
            if e > s && raw.get(e).is_none_or(|c| !is_word_byte(*c)) {
                found = Some((format!("Amendment {}", &text[s..e]), e));
            }
        } else if keyword_at(lower, i, "annex") {
            let s = skip_spaces(raw, i + 5);
            let mut e = s;
            while e < raw.len() && matches!(raw[e], b'I' | b'V' | b'X' | b'L' | b'C') {
                e += 1;
            }
            if e > s && raw.get(e).is_none_or(|c| !is_word_byte(*c)) {
                let annex = &text[s..e];
                let mut j = e;
                if raw.get(j) == Some(&b',') {
                    j += 1;
                }
                j = skip_spaces(raw, j);
                let mut loc = format!("Annex {annex}");
                let mut end = e;
                if lower[j..].starts_with(b"section") {
                    let (ds, de) = take_digits(raw, skip_spaces(raw, j + 7));
                    if de > ds {
                        let g = take_groups(raw, de);
                        let _ = write!(loc, " Section {}", &text[ds..g]);
                        end = g;
                    }
                }
                found = Some((loc, end));
            }
        }
        match found {
            Some((loc, end)) => {
                if !out.contains(&loc) {
                    out.push(loc);
                }
                i = end.max(i + 1);
            }
            None => i += 1,
        }
    }
    out
}

// ---------------------------------------------------------------- excerpts

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActExcerpt {
    pub location: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActCorpusError {
    #[error("excerpt file has no blocks")]
    Empty,
    #[error("location {0:?} appears twice")]
    DuplicateLocation(String),
    #[error("excerpt {0:?} has no text")]
    EmptyExcerpt(String),
    #[error("{0:?} is not an Article, Annex or Amendment location")]
    BadLocation(String),
}

/// Verbatim Act passages keyed by location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActCorpus {
    excerpts: Vec<ActExcerpt>,
}

impl ActCorpus {
    pub fn new(excerpts: Vec<ActExcerpt>) -> Result<Self, ActCorpusError> {
        if excerpts.is_empty() {
            return Err(ActCorpusError::Empty);
        }
        for (k, e) in excerpts.iter().enumerate() {
            if act_locations(&e.location).first() != Some(&e.location) {
                return Err(ActCorpusError::BadLocation(e.location.clone()));
            }
            if e.text.trim().is_empty() {
                return Err(ActCorpusError::EmptyExcerpt(e.location.clone()));
            }
            if excerpts[..k].iter().any(|p| p.location == e.location) {
                return Err(ActCorpusError::DuplicateLocation(e.location.clone()));
            }
        }
        Ok(ActCorpus { excerpts })
    }

    /// Blocks of `location` line + text lines, separated by blank lines.
    pub fn parse(text: &str) -> Result<Self, ActCorpusError> {
        let mut excerpts = Vec::new();
        let mut block: Vec<&str> = Vec::new();
        let flush = |block: &mut Vec<&str>, excerpts: &mut Vec<ActExcerpt>| {
            if let Some((loc, rest)) = block.split_first() {
                let body: Vec<&str> = rest.iter().map(|l| l.trim()).collect();
                excerpts.push(ActExcerpt { location: loc.trim().to_string(), text: body.join(" ") });
            }
            block.clear();
        };
        for line in text.lines() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                flush(&mut block, &mut excerpts);
            } else {
                block.push(line);
            }
        }
        flush(&mut block, &mut excerpts);
        Self::new(excerpts)
    }

    pub fn reference() -> Self {
        Self::parse(REFERENCE_EXCERPTS).expect("reference excerpts are well-formed")
    }

    pub fn excerpts(&self) -> &[ActExcerpt] {
        &self.excerpts
    }

    pub fn get(&self, location: &str) -> Option<&ActExcerpt> {
        self.excerpts.iter().find(|e| e.location == location)
    }

    pub fn has_prohibitions(&self) -> bool {
        self.excerpts.iter().any(|e| e.location == "Article 5" || e.location.starts_with("Article 5("))
    }

    pub fn has_high_risk_areas(&self) -> bool {
        self.excerpts.iter().any(|e| e.location == "Annex III" || e.location.starts_with("Annex III "))
    }

    pub fn without(&self, prefix: &str) -> Vec<ActExcerpt> {
        self.excerpts.iter().filter(|e| !e.location.starts_with(prefix)).cloned().collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, e) in self.excerpts.iter().enumerate() {
            if k > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "{}\n{}", e.location, e.text);
        }
        out
    }
}

// ---------------------------------------------------------------- prompt

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RiskPromptError {
    #[error("Act corpus lacks {0} passages")]
    IncompleteCorpus(&'static str),
    #[error("technology name is empty")]
    EmptyTechnology,
    #[error(transparent)]
    Request(#[from] RequestError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSettings {
    pub model_name: String,
    pub temperature: f64,
}

impl RiskSettings {
    pub fn new(model_name: impl Into<String>) -> Self {
        RiskSettings { model_name: model_name.into(), temperature: DEFAULT_RISK_TEMPERATURE }
    }
}

pub fn build_risk_prompt(
    technology: &str,
    usage: &TechnologyUse,
    corpus: &ActCorpus,
    settings: &RiskSettings,
) -> Result<ChatRequest, RiskPromptError> {
    let tech = technology.trim();
    if tech.is_empty() {
        return Err(RiskPromptError::EmptyTechnology);
    }
    if !corpus.has_prohibitions() {
        return Err(RiskPromptError::IncompleteCorpus("Article 5"));
    }
    if !corpus.has_high_risk_areas() {
        return Err(RiskPromptError::IncompleteCorpus("Annex III"));
    }
    let system = format!(
        "You are an {JUDGE_ROLE} who works in the field of {tech} and the regulation of artificial intelligence under the EU AI Act."
    );

    let mut user = String::new();
    user.push_str("## Instructions\n");
    let _ = writeln!(
        user,
        "1. You will receive one use of {tech}, given as its domain, purpose, capability, AI user and AI subject."
    );
    let _ = writeln!(
        user,
        "2. First expand the concise {tech} use into a description of a hypothetical AI system that would implement it."
    );
    user.push_str(
        "3. Then classify the system as \"prohibited\", \"high risk\" or \"limited or low risk\" using only the Act sections below.\n",
    );
    user.push_str(
        "4. For prohibited or high risk systems, quote the relevant Act text verbatim and name its location (Article, Annex section or Amendment).\n",
    );
    user.push_str("5. Explain the reasoning that leads to the classification.\n\n");

    user.push_str("## Relevant sections of the EU AI Act\n");
    for e in corpus.excerpts() {
        let _ = writeln!(user, "[{}]\n{}\n", e.location, e.text);
    }

    let c = &usage.concepts;
    user.push_str("## Use\n");
    let _ = writeln!(user, "Domain: {}", c.domain());
    let _ = writeln!(user, "Purpose: {}", c.purpose());
    let _ = writeln!(user, "Capability: {}", c.capability());
    let _ = writeln!(user, "AI user: {}", c.ai_user());
    let _ = writeln!(user, "AI subject: {}\n", c.ai_subject());

    user.push_str("## Output structure\n");
    user.push_str("Answer with a single JSON object with exactly these fields:\n");
    user.push_str("- \"description\": the hypothetical system description\n");
    user.push_str("- \"classification\": one of \"prohibited\", \"high risk\", \"limited or low risk\"\n");
    user.push_str("- \"relevant_text\": the quoted Act text with its location, or null when no section applies\n");
    user.push_str("- \"reasoning\": why the classification follows from the Act\n");

    Ok(ChatRequest::new(system, user, settings.temperature, settings.model_name.clone(), ResponseHint::ObjectNotation)?)
}

// ---------------------------------------------------------------- parsing

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RiskParseError {
    #[error("response is not a JSON object: {reason} in {fragment:?}")]
    MalformedOutput { reason: String, fragment: String },
    #[error("response lacks field `{field}`: {fragment:?}")]
    MissingField { field: &'static str, fragment: String },
    #[error("unknown classification {0:?}")]
    UnknownClassification(String),
    #[error("response has no reasoning")]
    MissingReasoning,
    #[error("{tier} classification without an Act location: {fragment:?}")]
    UncitedHighSeverity { tier: RiskTier, fragment: String },
}

impl RiskParseError {
    /// Stable short name for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            RiskParseError::MalformedOutput { .. } => "MalformedOutput",
            RiskParseError::MissingField { .. } => "MissingField",
            RiskParseError::UnknownClassification(_) => "UnknownClassification",
            RiskParseError::MissingReasoning => "MissingReasoning",
            RiskParseError::UncitedHighSeverity { .. } => "UncitedHighSeverity",
        }
    }
}

fn lookup<'v>(obj: &'v serde_json::Map<String, Value>, keys: &[&str]) -> Option<&'v Value> {
    obj.iter().find(|(k, _)| keys.contains(&normalize_key(k).as_str())).map(|(_, v)| v)
}

fn value_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().filter_map(value_text).collect();
            (!parts.is_empty()).then(|| parts.join(" "))
        }
        Value::Object(o) => {
            let quote = lookup(o, &["text", "quote", "excerpt"]).and_then(value_text);
            let loc = lookup(o, &["location", "article", "reference", "source"]).and_then(value_text);
            match (quote, loc) {
                (Some(q), Some(l)) => Some(format!("{q} ({l})")),
                (q, l) => q.or(l),
            }
        }
        other => Some(other.to_string()),
    }
}

/// Parses a four-field risk answer into a validated assessment for `use_id`.
pub fn parse_risk_response(response: &str, use_id: UseId) -> Result<RiskAssessment, RiskParseError> {
    let value = first_value(response)
        .map_err(|reason| RiskParseError::MalformedOutput { reason, fragment: snippet(response, 160) })?;
    let Value::Object(obj) = &value else {
        return Err(RiskParseError::MalformedOutput {
            reason: "top-level value is not an object".into(),
            fragment: snippet(response, 160),
        });
    };
    let fragment = || snippet(&value.to_string(), 160);

    let description = lookup(obj, &["description", "system_description", "hypothetical_system", "hypothetical_system_description"])
        .and_then(value_text)
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| RiskParseError::MissingField { field: "description", fragment: fragment() })?;

    let raw_class = lookup(obj, &["classification", "risk_classification", "risk_tier", "tier", "risk_level"])
        .ok_or_else(|| RiskParseError::MissingField { field: "classification", fragment: fragment() })?;
    let class_text = value_text(raw_class).unwrap_or_default();
    let tier =
        RiskTier::from_surface(&class_text).ok_or_else(|| RiskParseError::UnknownClassification(class_text.trim().to_string()))?;

    let relevant = obj
        .iter()
        .find(|(k, _)| {
            let k = normalize_key(k);
            k.starts_with("relevant_text") || k == "relevant_act_text" || k == "act_text"
        })
        .and_then(|(_, v)| value_text(v))
        .map(ActCitation::new);

    let reasoning = lookup(obj, &["reasoning", "rationale", "justification"]).and_then(value_text).unwrap_or_default();

    RiskAssessment::new(use_id, description, tier, relevant, reasoning).map_err(|e| match e {
        ModelError::MissingReasoning(_) => RiskParseError::MissingReasoning,
        ModelError::UncitedHighSeverity { tier, .. } => RiskParseError::UncitedHighSeverity { tier, fragment: fragment() },
        ModelError::EmptyDescription(_) => RiskParseError::MissingField { field: "description", fragment: fragment() },
        other => RiskParseError::MalformedOutput { reason: other.to_string(), fragment: fragment() },
    })
}

// ---------------------------------------------------------------- distribution

/// Half-away-from-zero rounding to `places` decimals.
pub fn round_to(x: f64, places: i32) -> f64 {
    let f = libm::pow(10.0, places as f64);
    libm::round(x * f) / f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierShare {
    pub tier: RiskTier,
    pub count: usize,
    /// `None` when there are no assessments.
    pub percent: Option<f64>,
    pub percent_rounded: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskDistribution {
    pub total: usize,
    pub tiers: Vec<TierShare>,
}

impl RiskDistribution {
    pub fn count(&self, tier: RiskTier) -> usize {
        self.tiers.iter().find(|t| t.tier == tier).map_or(0, |t| t.count)
    }

    pub fn share(&self, tier: RiskTier) -> Option<&TierShare> {
        self.tiers.iter().find(|t| t.tier == tier)
    }
}

pub fn risk_distribution(assessments: &[RiskAssessment]) -> RiskDistribution {
    let total = assessments.len();
    let tiers = RiskTier::ALL
        .iter()
        .map(|&tier| {
            let count = assessments.iter().filter(|a| a.classification == tier).count();
            let pct = (total > 0).then(|| count as f64 * 100.0 / total as f64);
            TierShare {
                tier,
                count,
                percent: pct.map(|p| round_to(p, 1)),
                percent_rounded: pct.map(|p| libm::round(p) as u32),
            }
        })
        .collect();
    RiskDistribution { total, tiers }
}
