//! Readers for the on-disk input formats.

use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use riskscope_core::catalog::CatalogError;
use riskscope_core::eval::{CoverageMatch, GroundTruthUse};
use riskscope_core::overlooked::{CorpusFilter, IngestReport, PaperRecord, UntaggedPolicy};
use riskscope_core::risk::{ActCorpus, ActCorpusError};
use riskscope_core::usesgen::{ConceptDefinition, RealisticnessDefinition, TemplateError, TemplateExample, UsesGenTemplate};
use riskscope_core::{DomainCatalog, DomainEntry, UseId};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} line {line}: {reason}")]
    Line { path: PathBuf, line: usize, reason: String },
}

fn read(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|source| InputError::Io { path: path.to_path_buf(), source })
}

// ---------------------------------------------------------------- template

pub const REFERENCE_TEMPLATE: &str = include_str!("../data/usesgen_template.toml");

/// The template document. Domains come from `domains_file` (TSV, relative to
/// the template), an inline `[[domains]]` list, or the reference catalog.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    system_role: String,
    instruction: Vec<String>,
    uses_per_domain: u8,
    #[serde(default)]
    domains_file: Option<PathBuf>,
    #[serde(default)]
    domains: Option<Vec<DomainEntry>>,
    concept_definitions: Vec<ConceptDefinition>,
    realisticness_definitions: Vec<RealisticnessDefinition>,
    examples: Vec<TemplateExample>,
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateFileError {
    #[error("template document: {0}")]
    Syntax(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("domain list: {0}")]
    Catalog(#[from] CatalogError),
    #[error("template names both domains_file and an inline domain list")]
    TwoDomainSources,
    #[error(transparent)]
    Input(#[from] InputError),
}

pub fn parse_template(text: &str, base_dir: Option<&Path>) -> Result<UsesGenTemplate, TemplateFileError> {
    let f: TemplateFile = toml::from_str(text).map_err(|e| TemplateFileError::Syntax(e.to_string()))?;
    let domains = match (f.domains_file, f.domains) {
        (Some(_), Some(_)) => return Err(TemplateFileError::TwoDomainSources),
        (Some(file), None) => {
            let p = base_dir.map(|b| b.join(&file)).unwrap_or(file);
            DomainCatalog::parse(&read(&p)?)?
        }
        (None, Some(list)) => DomainCatalog::new(list)?,
        (None, None) => DomainCatalog::reference(),
    };
    Ok(UsesGenTemplate::new(
        f.system_role,
        f.instruction,
        f.concept_definitions,
        f.realisticness_definitions,
        domains,
        f.examples,
        f.uses_per_domain,
    )?)
}

pub fn load_template(path: &Path) -> Result<UsesGenTemplate, TemplateFileError> {
    parse_template(&read(path)?, path.parent())
}

pub fn reference_template() -> UsesGenTemplate {
    parse_template(REFERENCE_TEMPLATE, None).expect("shipped template is valid")
}

// ---------------------------------------------------------------- act corpus

#[derive(Debug, thiserror::Error)]
pub enum ActFileError {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("{path}: {source}")]
    Corpus { path: PathBuf, source: ActCorpusError },
}

/// A single excerpt file, or every `*.txt` in a directory in name order.
pub fn load_act_corpus(path: &Path) -> Result<ActCorpus, ActFileError> {
    let text = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|source| InputError::Io { path: path.to_path_buf(), source })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        let mut parts = Vec::new();
        for f in &files {
            parts.push(read(f)?);
        }
        parts.join("\n\n")
    } else {
        read(path)?
    };
    ActCorpus::parse(&text).map_err(|source| ActFileError::Corpus { path: path.to_path_buf(), source })
}

// ---------------------------------------------------------------- paper corpus

/// Streams a line-delimited corpus dump through the filter.
pub fn read_corpus(path: &Path, untagged: UntaggedPolicy) -> Result<(Vec<PaperRecord>, IngestReport), InputError> {
    let io_err = |source| InputError::Io { path: path.to_path_buf(), source };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut filter = CorpusFilter::new(untagged);
    let mut kept = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(r) = filter.push_line(i + 1, &line) {
            kept.push(r);
        }
    }
    Ok((kept, filter.finish()))
}

// ---------------------------------------------------------------- evaluation inputs

fn tsv_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.split('\t').collect()))
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

/// `gt_id <TAB> description <TAB> source_keys` with comma-separated keys.
pub fn parse_ground_truth(text: &str, path: &Path) -> Result<Vec<GroundTruthUse>, InputError> {
    let mut out: Vec<GroundTruthUse> = Vec::new();
    for (line, cols) in tsv_lines(text) {
        let bad = |reason: String| InputError::Line { path: path.to_path_buf(), line, reason };
        if cols.len() < 2 || cols.len() > 3 {
            return Err(bad(format!("expected 2 or 3 tab-separated columns, found {}", cols.len())));
        }
        let gt_id = cols[0].trim();
        let description = cols[1].trim();
        if gt_id.is_empty() || description.is_empty() {
            return Err(bad("empty id or description".into()));
        }
        if out.iter().any(|g| g.gt_id == gt_id) {
            return Err(bad(format!("ground-truth id {gt_id} repeated")));
        }
        let sources = cols.get(2).map(|s| split_list(s).map(str::to_string).collect()).unwrap_or_default();
        out.push(GroundTruthUse { gt_id: gt_id.into(), description: description.into(), sources });
    }
    Ok(out)
}

/// `gt_id <TAB> use_ids <TAB> rationale [<TAB> advisory]`; an empty id list
/// records a decision that nothing matches.
pub fn parse_matches(text: &str, path: &Path) -> Result<Vec<CoverageMatch>, InputError> {
    let mut out = Vec::new();
    for (line, cols) in tsv_lines(text) {
        let bad = |reason: String| InputError::Line { path: path.to_path_buf(), line, reason };
        if cols.len() < 2 || cols.len() > 4 {
            return Err(bad(format!("expected 2 to 4 tab-separated columns, found {}", cols.len())));
        }
        let ids = split_list(cols[1])
            .map(|s| s.parse::<UseId>().map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let advisory = match cols.get(3).map(|s| s.trim()) {
            None | Some("") => false,
            Some("advisory") => true,
            Some(other) => return Err(bad(format!("unknown flag {other:?}"))),
        };
        out.push(CoverageMatch {
            gt_id: cols[0].trim().into(),
            matched_use_ids: ids,
            rationale: cols.get(2).map(|s| s.trim().to_string()).unwrap_or_default(),
            advisory,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionRecord {
    pub rater_id: String,
    pub outcomes: Vec<bool>,
}

/// `rater_id,check_1,check_2,check_3` with values `correct` or `wrong`.
pub fn parse_attention_checks(text: &str, path: &Path) -> Result<Vec<AttentionRecord>, InputError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| InputError::Line { path: path.to_path_buf(), line, reason: e.to_string() })?;
        let bad = |reason: String| InputError::Line { path: path.to_path_buf(), line, reason };
        let rater_id = row.get(0).unwrap_or_default().to_string();
        if rater_id.is_empty() {
            return Err(bad("empty rater id".into()));
        }
        let outcomes = row
            .iter()
            .skip(1)
            .map(|v| match v.to_ascii_lowercase().as_str() {
                "correct" | "pass" | "1" | "true" => Ok(true),
                "wrong" | "fail" | "0" | "false" => Ok(false),
                other => Err(bad(format!("attention outcome {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(AttentionRecord { rater_id, outcomes });
    }
    Ok(out)
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthUse>, InputError> {
    parse_ground_truth(&read(path)?, path)
}

pub fn load_matches(path: &Path) -> Result<Vec<CoverageMatch>, InputError> {
    parse_matches(&read(path)?, path)
}

pub fn load_attention_checks(path: &Path) -> Result<Vec<AttentionRecord>, InputError> {
    parse_attention_checks(&read(path)?, path)
}
