//! Domain cue list used by the generation prompt.
//!
//! File format: UTF-8, one record per line, `name <TAB> provenance`, where
//! provenance is one of `annex3`, `act_text`, `focus_group`. Blank lines and
//! lines starting with `#` are ignored.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

const REFERENCE_CATALOG: &str = include_str!("../data/domains.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Listed as a high-risk area in Annex III.
    #[serde(rename = "annex3")]
    AnnexIII,
    /// Mentioned elsewhere in the Act text or its amendments.
    ActText,
    /// Added by the focus-group elicitation.
    FocusGroup,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::AnnexIII => "annex3",
            Provenance::ActText => "act_text",
            Provenance::FocusGroup => "focus_group",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "annex3" => Some(Provenance::AnnexIII),
            "act_text" => Some(Provenance::ActText),
            "focus_group" => Some(Provenance::FocusGroup),
            _ => None,
        }
    }

    pub fn is_act_derived(self) -> bool {
        !matches!(self, Provenance::FocusGroup)
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainEntry {
    pub name: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog has no entries")]
    EmptyCatalog,
    #[error("domain {0:?} is listed more than once")]
    DuplicateDomain(String),
    #[error("line {line}: unknown provenance tag {tag:?}")]
    InvalidProvenance { line: usize, tag: String },
    #[error("line {line}: expected `name<TAB>provenance`")]
    MalformedLine { line: usize },
}

/// Result of resolving a model-supplied domain name against the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainLookup<'a> {
    Entry(&'a DomainEntry),
    OffCatalog,
}

/// Ordered, case-insensitively unique list of domains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<DomainEntry>", into = "Vec<DomainEntry>")]
pub struct DomainCatalog {
    entries: Vec<DomainEntry>,
}

pub(crate) fn fold_key(s: &str) -> String {
    s.trim().to_lowercase()
}

impl DomainCatalog {
    pub fn new(entries: Vec<DomainEntry>) -> Result<Self, CatalogError> {
        if entries.is_empty() {
            return Err(CatalogError::EmptyCatalog);
        }
        let mut seen: Vec<String> = Vec::with_capacity(entries.len());
        for e in &entries {
            let key = fold_key(&e.name);
            if key.is_empty() {
                return Err(CatalogError::MalformedLine { line: 0 });
            }
            if seen.contains(&key) {
                return Err(CatalogError::DuplicateDomain(e.name.clone()));
            }
            seen.push(key);
        }
        Ok(DomainCatalog { entries })
    }

    /// Parses the tab-separated catalog format, preserving file order.
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, tag) = line.split_once('\t').ok_or(CatalogError::MalformedLine { line: line_no })?;
            let name = name.trim();
            if name.is_empty() {
                return Err(CatalogError::MalformedLine { line: line_no });
            }
            let tag = tag.trim();
            let provenance = Provenance::from_tag(tag)
                .ok_or_else(|| CatalogError::InvalidProvenance { line: line_no, tag: tag.to_string() })?;
            entries.push(DomainEntry { name: name.to_string(), provenance });
        }
        Self::new(entries)
    }

    /// The shipped 46-domain reference catalog.
    pub fn reference() -> Self {
        Self::parse(REFERENCE_CATALOG).expect("reference catalog is well-formed")
    }

    pub fn entries(&self) -> &[DomainEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn lookup(&self, name: &str) -> DomainLookup<'_> {
        let key = fold_key(name);
        match self.entries.iter().find(|e| fold_key(&e.name) == key) {
            Some(e) => DomainLookup::Entry(e),
            None => DomainLookup::OffCatalog,
        }
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        let key = fold_key(name);
        self.entries.iter().position(|e| fold_key(&e.name) == key)
    }

    /// Keeps only the named entries, in catalog order.
    pub fn subset<'n>(&self, names: impl IntoIterator<Item = &'n str>) -> Result<Self, CatalogError> {
        let wanted: Vec<String> = names.into_iter().map(fold_key).collect();
        let entries = self.entries.iter().filter(|e| wanted.contains(&fold_key(&e.name))).cloned().collect();
        Self::new(entries)
    }

    /// Splits the catalog into consecutive chunks of at most `size` domains.
    pub fn chunks(&self, size: usize) -> Vec<DomainCatalog> {
        self.entries
            .chunks(size.max(1))
            .map(|c| DomainCatalog { entries: c.to_vec() })
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.name);
            out.push('\t');
            out.push_str(e.provenance.tag());
            out.push('\n');
        }
        out
    }
}

impl TryFrom<Vec<DomainEntry>> for DomainCatalog {
    type Error = CatalogError;
    fn try_from(v: Vec<DomainEntry>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<DomainCatalog> for Vec<DomainEntry> {
    fn from(c: DomainCatalog) -> Self {
        c.entries
    }
}
