//! Annotation cards as CSV.
//!
//! The first line is a version comment, then a fixed header. Readers skip
//! `#` comment lines and match columns by header name.

use riskscope_core::card::{CardError, CardFields};
use riskscope_core::{
    AnnotationCard, ClassificationAgreement, Cohort, ExpertClassification, LikertItem, LikertScore, Realisticness, UseId,
};

pub const VERSION_LINE: &str = "# annotations-csv v1";

pub const HEADER: [&str; 13] = [
    "use_id",
    "rater_id",
    "cohort",
    "realisticness_vote",
    "familiarity",
    "adoption",
    "transformation",
    "risk_society",
    "risk_environment",
    "classification_agreement",
    "corrected_classification",
    "reasoning_correction",
    "usefulness_notes",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CsvError {
    #[error("csv: {0}")]
    Syntax(String),
    #[error("unsupported annotations version line {0:?}")]
    Version(String),
    #[error("header lacks column {0:?}")]
    MissingColumn(&'static str),
    #[error("row {row}, column {column}: {reason}")]
    Field { row: usize, column: &'static str, reason: String },
    #[error("row {row}: {source}")]
    Card { row: usize, source: CardError },
}

fn opt(s: &str) -> Option<&str> {
    let t = s.trim();
    (!t.is_empty()).then_some(t)
}

pub fn import_annotations(text: &str) -> Result<Vec<AnnotationCard>, CsvError> {
    if let Some(first) = text.lines().find(|l| l.starts_with('#')) {
        if first.starts_with("# annotations-csv") && first.trim() != VERSION_LINE {
            return Err(CsvError::Version(first.trim().into()));
        }
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CsvError::Syntax(e.to_string()))?.clone();
    let col = |name: &'static str| header.iter().position(|h| h.trim() == name).ok_or(CsvError::MissingColumn(name));
    let mut idx = [0usize; 13];
    for (i, name) in HEADER.iter().enumerate() {
        idx[i] = col(name)?;
    }
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let row = n + 1;
        let rec = rec.map_err(|e| CsvError::Syntax(e.to_string()))?;
        let get = |i: usize| rec.get(idx[i]).unwrap_or("");
        let field = |column: &'static str, reason: String| CsvError::Field { row, column, reason };

        let use_id: UseId = get(0).trim().parse().map_err(|e: riskscope_core::model::InvalidUseId| field("use_id", e.to_string()))?;
        let cohort = Cohort::from_tag(get(2).trim()).ok_or_else(|| field("cohort", format!("unknown cohort {:?}", get(2))))?;
        let realisticness_vote = Realisticness::from_surface(get(3))
            .ok_or_else(|| field("realisticness_vote", format!("unknown label {:?}", get(3))))?;
        let mut scores = Vec::with_capacity(5);
        for (k, item) in LikertItem::ALL.iter().enumerate() {
            let raw = get(4 + k).trim();
            let v: u8 = raw.parse().map_err(|_| field(HEADER[4 + k], format!("not a score: {raw:?}")))?;
            scores.push(LikertScore::new(*item, v).map_err(|source| CsvError::Card { row, source })?);
        }
        let classification_agreement = match opt(get(9)) {
            None => None,
            Some(s) => Some(
                ClassificationAgreement::from_surface(s)
                    .ok_or_else(|| field("classification_agreement", format!("unknown value {s:?}")))?,
            ),
        };
        let corrected_classification = match opt(get(10)) {
            None => None,
            Some(s) => Some(
                ExpertClassification::from_surface(s)
                    .ok_or_else(|| field("corrected_classification", format!("unknown value {s:?}")))?,
            ),
        };
        let card = AnnotationCard::new(CardFields {
            use_id,
            rater_id: get(1).trim().to_string(),
            cohort,
            realisticness_vote,
            scores,
            classification_agreement,
            corrected_classification,
            reasoning_correction: opt(get(11)).map(str::to_string),
            usefulness_notes: opt(get(12)).map(str::to_string),
        })
        .map_err(|source| CsvError::Card { row, source })?;
        out.push(card);
    }
    Ok(out)
}

/// Cards sorted by (use, rater) so equal sets export byte-identically.
pub fn export_annotations(cards: &[AnnotationCard]) -> String {
    let mut sorted: Vec<&AnnotationCard> = cards.iter().collect();
    sorted.sort_by(|a, b| (a.use_id(), a.rater_id()).cmp(&(b.use_id(), b.rater_id())));
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for c in sorted {
        let mut row: Vec<String> = vec![c.use_id().to_string(), c.rater_id().into(), c.cohort().tag().into(), c.realisticness_vote().surface().into()];
        row.extend(LikertItem::ALL.iter().map(|i| c.score(*i).to_string()));
        row.push(c.classification_agreement().map(|a| a.tag().to_string()).unwrap_or_default());
        row.push(c.corrected_classification().map(|x| x.surface().to_string()).unwrap_or_default());
        row.push(c.reasoning_correction().unwrap_or_default().into());
        row.push(c.usefulness_notes().unwrap_or_default().into());
        w.write_record(&row).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 input");
    format!("{VERSION_LINE}\n{body}")
}
