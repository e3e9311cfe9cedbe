//! Use generation: prompt assembly from the template, response parsing,
//! deduplication and the realisticness split.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::catalog::DomainCatalog;
use crate::chat::{ChatRequest, RequestError, ResponseHint};
use crate::json_text::{first_value, normalize_key, salvage_list, snippet};
use crate::model::{collapse_whitespace, ConceptField, Realisticness, RealisticnessVerdict, TechnologyUse, UseConcepts, UseId};

pub const TECHNOLOGY_PLACEHOLDER: &str = "[Technology X]";
pub const DEFAULT_USES_TEMPERATURE: f64 = 0.7;
const FRAGMENT_LEN: usize = 240;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleOrigin {
    /// Taken from the published exemplar.
    Published,
    /// Written for this repository.
    Authored,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateExample {
    pub domain: String,
    pub purpose: String,
    pub capability: String,
    pub ai_user: String,
    pub ai_subject: String,
    pub realisticness: Realisticness,
    pub justification: String,
    pub origin: ExampleOrigin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptDefinition {
    pub concept: ConceptKey,
    pub definition: String,
}

/// Serializable mirror of [`ConceptField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptKey {
    Domain,
    Purpose,
    Capability,
    AiUser,
    AiSubject,
}

impl From<ConceptKey> for ConceptField {
    fn from(k: ConceptKey) -> Self {
        match k {
            ConceptKey::Domain => ConceptField::Domain,
            ConceptKey::Purpose => ConceptField::Purpose,
            ConceptKey::Capability => ConceptField::Capability,
            ConceptKey::AiUser => ConceptField::AiUser,
            ConceptKey::AiSubject => ConceptField::AiSubject,
        }
    }
}

impl ConceptKey {
    pub fn display(self) -> &'static str {
        match self {
            ConceptKey::Domain => "Domain",
            ConceptKey::Purpose => "Purpose",
            ConceptKey::Capability => "Capability",
            ConceptKey::AiUser => "AI user",
            ConceptKey::AiSubject => "AI subject",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealisticnessDefinition {
    pub label: Realisticness,
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("system role must contain the {TECHNOLOGY_PLACEHOLDER} placeholder")]
    MissingPlaceholder,
    #[error("instruction must have three parts, found {0}")]
    InstructionParts(usize),
    #[error("concept definitions must cover each of the five concepts once")]
    ConceptDefinitions,
    #[error("realisticness definitions must cover each label once")]
    RealisticnessDefinitions,
    #[error("template needs exactly five examples, found {0}")]
    ExampleCount(usize),
    #[error("uses per domain must be 2 or 3, got {0}")]
    UsesPerDomain(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate")]
pub struct UsesGenTemplate {
    system_role: String,
    instruction: Vec<String>,
    concept_definitions: Vec<ConceptDefinition>,
    realisticness_definitions: Vec<RealisticnessDefinition>,
    domains: DomainCatalog,
    examples: Vec<TemplateExample>,
    uses_per_domain: u8,
}

#[derive(Deserialize)]
struct RawTemplate {
    system_role: String,
    instruction: Vec<String>,
    concept_definitions: Vec<ConceptDefinition>,
    realisticness_definitions: Vec<RealisticnessDefinition>,
    domains: DomainCatalog,
    examples: Vec<TemplateExample>,
    uses_per_domain: u8,
}

impl TryFrom<RawTemplate> for UsesGenTemplate {
    type Error = TemplateError;
    fn try_from(r: RawTemplate) -> Result<Self, Self::Error> {
        UsesGenTemplate::new(
            r.system_role,
            r.instruction,
            r.concept_definitions,
            r.realisticness_definitions,
            r.domains,
            r.examples,
            r.uses_per_domain,
        )
    }
}

impl UsesGenTemplate {
    pub fn new(
        system_role: String,
        instruction: Vec<String>,
        concept_definitions: Vec<ConceptDefinition>,
        realisticness_definitions: Vec<RealisticnessDefinition>,
        domains: DomainCatalog,
        examples: Vec<TemplateExample>,
        uses_per_domain: u8,
    ) -> Result<Self, TemplateError> {
        if !system_role.contains(TECHNOLOGY_PLACEHOLDER) {
            return Err(TemplateError::MissingPlaceholder);
        }
        if instruction.len() != 3 || instruction.iter().any(|s| s.trim().is_empty()) {
            return Err(TemplateError::InstructionParts(instruction.len()));
        }
        let keys = [ConceptKey::Domain, ConceptKey::Purpose, ConceptKey::Capability, ConceptKey::AiUser, ConceptKey::AiSubject];
        if concept_definitions.len() != 5 || !keys.iter().all(|k| concept_definitions.iter().any(|d| d.concept == *k)) {
            return Err(TemplateError::ConceptDefinitions);
        }
        if realisticness_definitions.len() != 3
            || !Realisticness::ALL.iter().all(|l| realisticness_definitions.iter().any(|d| d.label == *l))
        {
            return Err(TemplateError::RealisticnessDefinitions);
        }
        if examples.len() != 5 {
            return Err(TemplateError::ExampleCount(examples.len()));
        }
        check_uses_per_domain(uses_per_domain)?;
        Ok(UsesGenTemplate {
            system_role,
            instruction,
            concept_definitions,
            realisticness_definitions,
            domains,
            examples,
            uses_per_domain,
        })
    }

    pub fn domains(&self) -> &DomainCatalog {
        &self.domains
    }
    pub fn examples(&self) -> &[TemplateExample] {
        &self.examples
    }
    pub fn uses_per_domain(&self) -> u8 {
        self.uses_per_domain
    }
    pub fn system_role(&self) -> &str {
        &self.system_role
    }

    pub fn with_uses_per_domain(&self, n: u8) -> Result<Self, TemplateError> {
        check_uses_per_domain(n)?;
        Ok(UsesGenTemplate { uses_per_domain: n, ..self.clone() })
    }

    pub fn with_domains(&self, domains: DomainCatalog) -> Self {
        UsesGenTemplate { domains, ..self.clone() }
    }

    /// One template per chunk of at most `size` domains.
    pub fn chunked(&self, size: usize) -> Vec<Self> {
        self.domains.chunks(size).into_iter().map(|d| self.with_domains(d)).collect()
    }
}

fn check_uses_per_domain(n: u8) -> Result<(), TemplateError> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        Err(TemplateError::UsesPerDomain(n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    pub model_name: String,
    pub temperature: f64,
}

impl GenerationSettings {
    pub fn new(model_name: impl Into<String>) -> Self {
        GenerationSettings { model_name: model_name.into(), temperature: DEFAULT_USES_TEMPERATURE }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("technology name is empty")]
    EmptyTechnology,
    #[error(transparent)]
    Request(#[from] RequestError),
}

/// Section headings; the scan-based tests rely on this order.
pub const SECTION_HEADINGS: [&str; 5] =
    ["## Instructions", "## Risk concepts", "## Realisticness categories", "## Domains", "## Examples"];

fn example_json(e: &TemplateExample) -> Value {
    let mut m = serde_json::Map::new();
    m.insert("domain".into(), e.domain.clone().into());
    m.insert("purpose".into(), e.purpose.clone().into());
    m.insert("capability".into(), e.capability.clone().into());
    m.insert("ai_user".into(), e.ai_user.clone().into());
    m.insert("ai_subject".into(), e.ai_subject.clone().into());
    m.insert("realisticness".into(), e.realisticness.surface().into());
    m.insert("justification".into(), e.justification.clone().into());
    Value::Object(m)
}

pub fn build_usesgen_prompt(
    technology: &str,
    template: &UsesGenTemplate,
    settings: &GenerationSettings,
) -> Result<ChatRequest, PromptError> {
    let tech = technology.trim();
    if tech.is_empty() {
        return Err(PromptError::EmptyTechnology);
    }
    let system = template.system_role.replace(TECHNOLOGY_PLACEHOLDER, tech);
    let n = template.uses_per_domain;
    let sub = |s: &str| s.replace(TECHNOLOGY_PLACEHOLDER, tech);

    let mut u = String::new();
    let _ = writeln!(u, "{}", SECTION_HEADINGS[0]);
    for (k, part) in template.instruction.iter().enumerate() {
        let _ = writeln!(u, "{}. {}", k + 1, sub(part.trim()));
    }
    let _ = writeln!(u, "Generate exactly {n} uses of {tech} for each domain in the domain list.");
    u.push_str(
        "Return a JSON array; each element has the keys \"domain\", \"purpose\", \"capability\", \"ai_user\", \"ai_subject\", \"realisticness\" and \"justification\".\n\n",
    );

    let _ = writeln!(u, "{}", SECTION_HEADINGS[1]);
    for d in &template.concept_definitions {
        let _ = writeln!(u, "- {}: {}", d.concept.display(), sub(d.definition.trim()));
    }
    u.push('\n');

    let _ = writeln!(u, "{}", SECTION_HEADINGS[2]);
    for d in &template.realisticness_definitions {
        let _ = writeln!(u, "- {}: {}", d.label.surface(), sub(d.definition.trim()));
    }
    u.push('\n');

    let _ = writeln!(u, "{}", SECTION_HEADINGS[3]);
    for name in template.domains.names() {
        let _ = writeln!(u, "- {name}");
    }
    u.push('\n');

    let _ = writeln!(u, "{}", SECTION_HEADINGS[4]);
    let examples: Vec<Value> = template.examples.iter().map(example_json).collect();
    let rendered = serde_json::to_string_pretty(&Value::Array(examples)).expect("examples serialize");
    u.push_str(&rendered);
    u.push('\n');

    Ok(ChatRequest::new(system, u, settings.temperature, settings.model_name.clone(), ResponseHint::ObjectNotation)?)
}

// ---------------------------------------------------------------- parsing

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    /// Skip bad records and report them.
    #[default]
    Lenient,
    /// The first bad record is fatal.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UsesParseError {
    #[error("output is not a JSON list of uses ({reason}): {fragment:?}")]
    MalformedOutput { reason: String, fragment: String },
    #[error("record {index} is not an object: {fragment:?}")]
    NotAnObject { index: usize, fragment: String },
    #[error("record {index} lacks `{field}`: {fragment:?}")]
    IncompleteUse { index: usize, field: String, fragment: String },
    #[error("record {index} has unknown realisticness label {label:?}: {fragment:?}")]
    UnknownLabel { index: usize, label: String, fragment: String },
    #[error("record {index} has no justification: {fragment:?}")]
    MissingJustification { index: usize, fragment: String },
}

impl UsesParseError {
    pub fn kind(&self) -> &'static str {
        match self {
            UsesParseError::MalformedOutput { .. } => "MalformedOutput",
            UsesParseError::NotAnObject { .. } => "NotAnObject",
            UsesParseError::IncompleteUse { .. } => "IncompleteUse",
            UsesParseError::UnknownLabel { .. } => "UnknownLabel",
            UsesParseError::MissingJustification { .. } => "MissingJustification",
        }
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            UsesParseError::MalformedOutput { .. } => None,
            UsesParseError::NotAnObject { index, .. }
            | UsesParseError::IncompleteUse { index, .. }
            | UsesParseError::UnknownLabel { index, .. }
            | UsesParseError::MissingJustification { index, .. } => Some(*index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParsedUses {
    pub uses: Vec<TechnologyUse>,
    /// Records skipped in lenient mode, by record index.
    pub skipped: Vec<UsesParseError>,
}

fn field_aliases(f: ConceptField) -> &'static [&'static str] {
    match f {
        ConceptField::Domain => &["domain"],
        ConceptField::Purpose => &["purpose"],
        ConceptField::Capability => &["capability"],
        ConceptField::AiUser => &["ai_user", "aiuser", "user"],
        ConceptField::AiSubject => &["ai_subject", "aisubject", "subject"],
    }
}

fn get_str(obj: &serde_json::Map<String, Value>, keys: &[&str]) -> Option<String> {
    obj.iter().find(|(k, _)| keys.contains(&normalize_key(k).as_str())).and_then(|(_, v)| match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.clone()),
        _ => None,
    })
}

fn parse_record(index: usize, v: &Value) -> Result<(UseConcepts, RealisticnessVerdict, Option<String>), UsesParseError> {
    let fragment = || snippet(&v.to_string(), FRAGMENT_LEN);
    let Value::Object(obj) = v else {
        return Err(UsesParseError::NotAnObject { index, fragment: fragment() });
    };
    let mut vals: Vec<String> = Vec::with_capacity(5);
    for f in ConceptField::ALL {
        match get_str(obj, field_aliases(f)) {
            Some(s) => vals.push(s),
            None => return Err(UsesParseError::IncompleteUse { index, field: f.key().to_string(), fragment: fragment() }),
        }
    }
    let label_text = get_str(obj, &["realisticness", "realism", "label", "category", "realisticness_label"])
        .ok_or_else(|| UsesParseError::IncompleteUse { index, field: "realisticness".into(), fragment: fragment() })?;
    let label = Realisticness::from_surface(&label_text)
        .ok_or_else(|| UsesParseError::UnknownLabel { index, label: label_text.trim().to_string(), fragment: fragment() })?;
    let justification = get_str(obj, &["justification", "realisticness_justification", "reason"])
        .ok_or_else(|| UsesParseError::MissingJustification { index, fragment: fragment() })?;
    let summary = get_str(obj, &["summary", "title"]);
    let mut it = vals.into_iter();
    let mut next = || it.next().unwrap();
    let concepts = UseConcepts::new(next(), next(), next(), next(), next()).expect("fields checked non-empty");
    let verdict = RealisticnessVerdict::new(label, justification).expect("justification checked non-empty");
    Ok((concepts, verdict, summary))
}

/// Parses a model answer listing uses. Valid records get ids 1, 2, ... in order.
pub fn parse_uses_response(response: &str, mode: ParseMode) -> Result<ParsedUses, UsesParseError> {
    let mut out = ParsedUses::default();
    let value = match first_value(response) {
        Ok(v) => v,
        Err(reason) => {
            let err = UsesParseError::MalformedOutput { reason, fragment: snippet(response.trim(), FRAGMENT_LEN) };
            // a cut-off answer still carries its complete leading records
            match salvage_list(response) {
                Some((items, why)) if mode == ParseMode::Lenient && !items.is_empty() => {
                    out.skipped.push(UsesParseError::MalformedOutput { reason: why, fragment: snippet(response.trim(), FRAGMENT_LEN) });
                    Value::Array(items)
                }
                _ => return Err(err),
            }
        }
    };
    let records = match value {
        Value::Array(a) => a,
        // tolerate a wrapper object holding the list under a single key
        Value::Object(o) if o.len() == 1 && o.values().next().is_some_and(Value::is_array) => match o.into_iter().next() {
            Some((_, Value::Array(a))) => a,
            _ => unreachable!(),
        },
        other => {
            return Err(UsesParseError::MalformedOutput {
                reason: "top-level value is not a list".into(),
                fragment: snippet(&other.to_string(), FRAGMENT_LEN),
            })
        }
    };
    for (index, rec) in records.iter().enumerate() {
        match parse_record(index, rec) {
            Ok((c, v, s)) => {
                let id = UseId(out.uses.len() as u32 + 1);
                out.uses.push(TechnologyUse::new(id, c, v, s));
            }
            Err(e) if mode == ParseMode::Lenient => out.skipped.push(e),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Marks uses whose domain is not in `catalog` and canonicalizes the rest.
pub fn resolve_domains(uses: &mut [TechnologyUse], catalog: &DomainCatalog) {
    for u in uses {
        u.concepts.resolve_domain(catalog);
    }
}

pub fn dedup_key(u: &TechnologyUse) -> String {
    let c = &u.concepts;
    let mut k = String::new();
    for part in [c.domain(), c.purpose(), c.ai_user(), c.ai_subject()] {
        k.push_str(&collapse_whitespace(&part.to_lowercase()));
        k.push('\u{1f}');
    }
    k
}

/// Drops later records repeating an earlier normalized key, then renumbers.
pub fn deduplicate_uses(uses: Vec<TechnologyUse>) -> Vec<TechnologyUse> {
    let mut seen: alloc::collections::BTreeSet<String> = alloc::collections::BTreeSet::new();
    let mut out: Vec<TechnologyUse> = uses.into_iter().filter(|u| seen.insert(dedup_key(u))).collect();
    for (i, u) in out.iter_mut().enumerate() {
        u.use_id = UseId(i as u32 + 1);
    }
    out
}

/// Returns (realistic, unlikely), each in input order.
pub fn partition_by_realisticness(uses: &[TechnologyUse]) -> (Vec<TechnologyUse>, Vec<TechnologyUse>) {
    uses.iter().cloned().partition(|u| u.label().is_realistic())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageCounts {
    pub raw_parsed: usize,
    pub skipped: usize,
    pub after_dedup: usize,
    pub realistic: usize,
    pub unlikely: usize,
}

/// Concatenates chunk results in order, resolves domains, dedups and counts.
pub fn assemble(chunks: Vec<ParsedUses>, catalog: &DomainCatalog) -> (Vec<TechnologyUse>, Vec<UsesParseError>, StageCounts) {
    let mut all = Vec::new();
    let mut skipped = Vec::new();
    for c in chunks {
        all.extend(c.uses);
        skipped.extend(c.skipped);
    }
    let raw_parsed = all.len();
    resolve_domains(&mut all, catalog);
    let uses = deduplicate_uses(all);
    let (realistic, unlikely) = partition_by_realisticness(&uses);
    let counts = StageCounts {
        raw_parsed,
        skipped: skipped.len(),
        after_dedup: uses.len(),
        realistic: realistic.len(),
        unlikely: unlikely.len(),
    };
    (uses, skipped, counts)
}

/// Error text with a stage prefix, for pipeline reports.
pub fn staged(stage: &str, err: impl core::fmt::Display) -> String {
    format!("{stage}: {err}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    pub(crate) fn template() -> UsesGenTemplate {
        let ex = |d: &str| TemplateExample {
            domain: d.into(),
            purpose: "p".into(),
            capability: "c".into(),
            ai_user: "u".into(),
            ai_subject: "s".into(),
            realisticness: Realisticness::Upcoming,
            justification: "j".into(),
            origin: ExampleOrigin::Authored,
        };
        UsesGenTemplate::new(
            "Senior [Technology X] Specialist and Evaluator".into(),
            vec!["one".into(), "two".into(), "three [Technology X]".into()],
            [ConceptKey::Domain, ConceptKey::Purpose, ConceptKey::Capability, ConceptKey::AiUser, ConceptKey::AiSubject]
                .into_iter()
                .map(|concept| ConceptDefinition { concept, definition: "def".into() })
                .collect(),
            Realisticness::ALL.into_iter().map(|label| RealisticnessDefinition { label, definition: "d".into() }).collect(),
            DomainCatalog::reference(),
            vec![ex("Health"), ex("Energy"), ex("Smart home"), ex("Hobbies"), ex("Law enforcement")],
            3,
        )
        .unwrap()
    }

    #[test]
    fn role_substitution() {
        let r = build_usesgen_prompt("Facial Recognition and Analysis", &template(), &GenerationSettings::new("gpt-4")).unwrap();
        assert_eq!(r.system_text(), "Senior Facial Recognition and Analysis Specialist and Evaluator");
        assert!(r.user_text().contains("3. three Facial Recognition and Analysis"));
        assert_eq!(build_usesgen_prompt("  ", &template(), &GenerationSettings::new("m")), Err(PromptError::EmptyTechnology));
    }

    #[test]
    fn template_rules() {
        let t = template();
        assert_eq!(t.with_uses_per_domain(4), Err(TemplateError::UsesPerDomain(4)));
        let mut ex = t.examples().to_vec();
        ex.pop();
        let e = UsesGenTemplate::new(
            t.system_role.clone(),
            t.instruction.clone(),
            t.concept_definitions.clone(),
            t.realisticness_definitions.clone(),
            t.domains.clone(),
            ex,
            3,
        );
        assert_eq!(e, Err(TemplateError::ExampleCount(4)));
        assert_eq!(t.chunked(10).len(), 5);
    }

    fn record(domain: &str, purpose: &str) -> String {
        format!(
            r#"{{"domain":"{domain}","purpose":"{purpose}","capability":"c","ai_user":"u","ai_subject":"s","realisticness":"upcoming","justification":"j"}}"#
        )
    }

    #[test]
    fn parse_empty_and_missing() {
        assert!(parse_uses_response("[]", ParseMode::Strict).unwrap().uses.is_empty());
        let bad = r#"[{"domain":"Health","purpose":"p","capability":"c","ai_user":"u","realisticness":"upcoming","justification":"j"}]"#;
        let e = parse_uses_response(bad, ParseMode::Strict).unwrap_err();
        assert!(matches!(e, UsesParseError::IncompleteUse { index: 0, ref field, .. } if field == "ai_subject"));
        let lenient = parse_uses_response(bad, ParseMode::Lenient).unwrap();
        assert_eq!(lenient.skipped.len(), 1);
    }

    #[test]
    fn lenient_keeps_siblings() {
        let text = format!("[{}, 7, {}]", record("Health", "a"), record("Energy", "b"));
        let p = parse_uses_response(&text, ParseMode::Lenient).unwrap();
        assert_eq!(p.uses.len(), 2);
        assert_eq!(p.uses[1].use_id, UseId(2));
        assert_eq!(p.skipped[0].kind(), "NotAnObject");
    }

    #[test]
    fn dedup_key_covers_domain() {
        let text = format!("[{}, {}, {}]", record("Health", "Track"), record("health ", "  track"), record("Energy", "Track"));
        let p = parse_uses_response(&text, ParseMode::Strict).unwrap();
        let d = deduplicate_uses(p.uses);
        assert_eq!(d.len(), 2);
        assert_eq!(d[1].use_id, UseId(2));
        assert_eq!(d[1].concepts.domain(), "Energy");
    }
}
