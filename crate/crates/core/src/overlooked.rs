//! Corpus filtering, the flat similarity index, threshold calibration and
//! overlooked-use verdicts.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, EmbedError, Embedder, EmbeddingVector};
use crate::model::{TechnologyUse, UseId};

// ---------------------------------------------------------------- papers

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(default)]
    pub venue: Option<String>,
    #[serde(default, alias = "language_tag")]
    pub language: Option<String>,
}

impl PaperRecord {
    /// Title and abstract joined by a space.
    pub fn embedding_text(&self) -> String {
        let mut s = String::with_capacity(self.title.len() + self.abstract_text.len() + 1);
        s.push_str(self.title.trim());
        s.push(' ');
        s.push_str(self.abstract_text.trim());
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    MissingTitle,
    MissingAbstract,
    NonEnglish,
    Untagged,
    DuplicateId,
}

/// What to do with records that carry no language tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UntaggedPolicy {
    /// Trust the dump: untagged records are kept.
    #[default]
    Keep,
    Drop,
    /// Keep only untagged records that pass [`looks_english`].
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub read: usize,
    pub kept: usize,
    pub dropped: BTreeMap<DropReason, usize>,
    /// 1-based line numbers of records that failed to parse.
    pub malformed_lines: Vec<usize>,
}

impl IngestReport {
    pub fn dropped(&self, reason: DropReason) -> usize {
        self.dropped.get(&reason).copied().unwrap_or(0)
    }
}

fn is_english_tag(tag: &str) -> bool {
    let t = tag.trim().to_ascii_lowercase();
    t == "en" || t == "eng" || t == "english" || t.starts_with("en-") || t.starts_with("en_")
}

/// Cheap check: at least two common English function words among the tokens.
pub fn looks_english(text: &str) -> bool {
    const COMMON: &[&str] = &["the", "of", "and", "to", "in", "we", "is", "for", "with", "this", "that", "on", "are"];
    let hits = text
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .filter(|w| COMMON.iter().any(|c| c.eq_ignore_ascii_case(w)))
        .count();
    hits >= 2
}

/// Streaming corpus filter over JSON lines.
#[derive(Debug, Default)]
pub struct CorpusFilter {
    pub untagged: UntaggedPolicy,
    report: IngestReport,
    seen: BTreeMap<String, ()>,
}

impl CorpusFilter {
    pub fn new(untagged: UntaggedPolicy) -> Self {
        CorpusFilter { untagged, ..Default::default() }
    }

    /// Feeds one line (1-based `line_no`); returns the record when kept.
    pub fn push_line(&mut self, line_no: usize, line: &str) -> Option<PaperRecord> {
        if line.trim().is_empty() {
            return None;
        }
        self.report.read += 1;
        match serde_json::from_str::<PaperRecord>(line) {
            Ok(r) => self.push(r),
            Err(_) => {
                self.report.malformed_lines.push(line_no);
                None
            }
        }
    }

    pub fn push(&mut self, r: PaperRecord) -> Option<PaperRecord> {
        let reason = if r.title.trim().is_empty() {
            Some(DropReason::MissingTitle)
        } else if r.abstract_text.trim().is_empty() {
            Some(DropReason::MissingAbstract)
        } else {
            match r.language.as_deref().map(str::trim).filter(|t| !t.is_empty()) {
                Some(tag) if is_english_tag(tag) => None,
                Some(_) => Some(DropReason::NonEnglish),
                None => match self.untagged {
                    UntaggedPolicy::Keep => None,
                    UntaggedPolicy::Drop => Some(DropReason::Untagged),
                    UntaggedPolicy::Heuristic if looks_english(&r.embedding_text()) => None,
                    UntaggedPolicy::Heuristic => Some(DropReason::Untagged),
                },
            }
        };
        let reason = reason.or_else(|| self.seen.contains_key(&r.paper_id).then_some(DropReason::DuplicateId));
        match reason {
            Some(why) => {
                *self.report.dropped.entry(why).or_insert(0) += 1;
                None
            }
            None => {
                self.seen.insert(r.paper_id.clone(), ());
                self.report.kept += 1;
                Some(r)
            }
        }
    }

    pub fn finish(self) -> IngestReport {
        self.report
    }
}

/// Filters a whole dump held in memory.
pub fn ingest_corpus(text: &str, untagged: UntaggedPolicy) -> (Vec<PaperRecord>, IngestReport) {
    let mut f = CorpusFilter::new(untagged);
    let kept = text.lines().enumerate().filter_map(|(i, l)| f.push_line(i + 1, l)).collect();
    (kept, f.finish())
}

// ---------------------------------------------------------------- index

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no uses to compare against")]
    NoUses,
    #[error("row {row} has dimension {got}, index has {expected}")]
    Dimension { row: usize, expected: usize, got: usize },
    #[error("{ids} ids for {rows} rows")]
    IdCount { ids: usize, rows: usize },
    #[error("percentile {0} outside (0, 100]")]
    Percentile(f64),
    #[error("embedding {id}: {source}")]
    Embed { id: String, source: EmbedError },
}

/// Row-major matrix of unit vectors plus their paper ids.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    provider: String,
    dimension: usize,
    ids: Vec<String>,
    data: Vec<f32>,
}

impl CorpusIndex {
    pub fn from_parts(provider: String, dimension: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self, IndexError> {
        if dimension == 0 {
            return Err(IndexError::Dimension { row: 0, expected: 1, got: 0 });
        }
        if data.len() != ids.len() * dimension {
            return Err(IndexError::IdCount { ids: ids.len(), rows: data.len() / dimension });
        }
        Ok(CorpusIndex { provider, dimension, ids, data })
    }

    pub fn from_vectors(provider: String, dimension: usize, rows: Vec<(String, EmbeddingVector)>) -> Result<Self, IndexError> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dimension);
        for (row, (id, v)) in rows.into_iter().enumerate() {
            if v.dimension() != dimension {
                return Err(IndexError::Dimension { row, expected: dimension, got: v.dimension() });
            }
            ids.push(id);
            data.extend_from_slice(v.values());
        }
        Self::from_parts(provider, dimension, ids, data)
    }

    /// Sequential build; the std crate has a parallel variant.
    pub fn build<E: Embedder>(embedder: &E, papers: &[PaperRecord]) -> Result<Self, IndexError> {
        let mut rows = Vec::with_capacity(papers.len());
        for p in papers {
            let v = embedder.embed(&p.embedding_text()).map_err(|source| IndexError::Embed { id: p.paper_id.clone(), source })?;
            rows.push((p.paper_id.clone(), v));
        }
        Self::from_vectors(embedder.tag(), embedder.dimension(), rows)
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }
    pub fn dimension(&self) -> usize {
        self.dimension
    }
    pub fn len(&self) -> usize {
        self.ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
    pub fn ids(&self) -> &[String] {
        &self.ids
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }
}

/// An embedded use.
#[derive(Debug, Clone, PartialEq)]
pub struct UseVector {
    pub use_id: UseId,
    pub vector: EmbeddingVector,
}

/// Text embedded for a use: purpose, capability and domain as three sentences.
pub fn use_embedding_text(u: &TechnologyUse) -> String {
    let c = &u.concepts;
    let mut s = String::new();
    for part in [c.purpose(), c.capability(), c.domain()] {
        if !s.is_empty() {
            s.push(' ');
        }
        s.push_str(part.trim().trim_end_matches('.'));
        s.push('.');
    }
    s
}

pub fn embed_uses<E: Embedder>(embedder: &E, uses: &[TechnologyUse]) -> Result<Vec<UseVector>, IndexError> {
    uses.iter()
        .map(|u| {
            let vector = embedder
                .embed(&use_embedding_text(u))
                .map_err(|source| IndexError::Embed { id: u.use_id.to_string(), source })?;
            Ok(UseVector { use_id: u.use_id, vector })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsePaperMatch {
    pub use_id: UseId,
    pub paper_id: String,
    pub similarity: f64,
}

/// Higher similarity first, then smaller paper id.
fn rank_order(a: &UsePaperMatch, b: &UsePaperMatch) -> Ordering {
    b.similarity.partial_cmp(&a.similarity).unwrap_or(Ordering::Equal).then_with(|| a.paper_id.cmp(&b.paper_id))
}

fn check_dim(index: &CorpusIndex, u: &UseVector) -> Result<(), IndexError> {
    if u.vector.dimension() != index.dimension() {
        return Err(IndexError::Dimension { row: u.use_id.0 as usize, expected: index.dimension(), got: u.vector.dimension() });
    }
    Ok(())
}

/// Argmax-similarity paper for one use; ties go to the smallest paper id.
pub fn best_match(u: &UseVector, index: &CorpusIndex) -> Result<UsePaperMatch, IndexError> {
    if index.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    check_dim(index, u)?;
    let mut best: Option<(f64, usize)> = None;
    for i in 0..index.len() {
        let s = cosine(u.vector.values(), index.row(i));
        let better = match best {
            None => true,
            Some((bs, bi)) => s > bs || (s == bs && index.ids[i] < index.ids[bi]),
        };
        if better {
            best = Some((s, i));
        }
    }
    let (similarity, i) = best.expect("non-empty index");
    Ok(UsePaperMatch { use_id: u.use_id, paper_id: index.ids[i].clone(), similarity })
}

/// Which distribution the percentile is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentileBasis {
    /// Each paper's maximum similarity over all uses.
    #[default]
    PerPaper,
    /// Every (use, paper) similarity.
    PerPair,
}

pub const PROBE_PERCENTILES: [f64; 4] = [95.0, 99.0, 99.5, 99.9];

/// 1-based nearest rank `ceil(p/100 * n)`, clamped to `[1, n]`.
///
/// The percentile is fixed to six decimals first so that values like 99.9
/// do not pick up a spurious extra rank from binary rounding.
pub fn nearest_rank(percentile: f64, n: usize) -> usize {
    let micros = libm::round(percentile * 1e6) as u128;
    let num = micros * n as u128;
    let den = 100_000_000u128;
    let rank = num.div_ceil(den) as usize;
    rank.clamp(1, n.max(1))
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile_of_sorted(sorted: &[f64], percentile: f64) -> f64 {
    sorted[nearest_rank(percentile, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub percentile: f64,
    pub threshold: f64,
    /// Papers whose maximum similarity is at or above the threshold.
    pub papers_at_or_above: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub percentile: f64,
    pub basis: PercentileBasis,
    pub threshold: f64,
    pub distribution_size: usize,
    pub papers_at_or_above: usize,
    pub probes: Vec<ProbeRow>,
}

/// Per-paper maximum similarity against any use, in index order.
pub fn per_paper_max(index: &CorpusIndex, uses: &[UseVector]) -> Vec<f64> {
    (0..index.len())
        .map(|i| uses.iter().map(|u| cosine(u.vector.values(), index.row(i))).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

fn ascending(v: &mut [f64]) {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
}

/// Threshold at `percentile` of the chosen similarity distribution, plus a
/// probe table over the standard percentiles.
pub fn calibrate_threshold(
    index: &CorpusIndex,
    uses: &[UseVector],
    percentile: f64,
    basis: PercentileBasis,
) -> Result<Calibration, IndexError> {
    if index.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    if uses.is_empty() {
        return Err(IndexError::NoUses);
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(IndexError::Percentile(percentile));
    }
    for u in uses {
        check_dim(index, u)?;
    }
    let maxima = per_paper_max(index, uses);
    let mut dist = match basis {
        PercentileBasis::PerPaper => maxima.clone(),
        PercentileBasis::PerPair => {
            let mut all = Vec::with_capacity(index.len() * uses.len());
            for i in 0..index.len() {
                for u in uses {
                    all.push(cosine(u.vector.values(), index.row(i)));
                }
            }
            all
        }
    };
    ascending(&mut dist);
    let at_or_above = |t: f64| maxima.iter().filter(|&&m| m >= t).count();
    let threshold = percentile_of_sorted(&dist, percentile);
    let probes = PROBE_PERCENTILES
        .iter()
        .map(|&p| {
            let t = percentile_of_sorted(&dist, p);
            ProbeRow { percentile: p, threshold: t, papers_at_or_above: at_or_above(t) }
        })
        .collect();
    Ok(Calibration {
        percentile,
        basis,
        threshold,
        distribution_size: dist.len(),
        papers_at_or_above: at_or_above(threshold),
        probes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVerdict")]
pub struct OverlookedVerdict {
    pub use_id: UseId,
    overlooked: bool,
    supporting_papers: Vec<UsePaperMatch>,
    pub threshold_used: f64,
}

#[derive(Deserialize)]
struct RawVerdict {
    use_id: UseId,
    overlooked: bool,
    supporting_papers: Vec<UsePaperMatch>,
    threshold_used: f64,
}

impl TryFrom<RawVerdict> for OverlookedVerdict {
    type Error = &'static str;
    fn try_from(r: RawVerdict) -> Result<Self, Self::Error> {
        if r.overlooked != r.supporting_papers.is_empty() {
            return Err("overlooked must equal an empty supporting list");
        }
        Ok(OverlookedVerdict::new(r.use_id, r.supporting_papers, r.threshold_used))
    }
}

impl OverlookedVerdict {
    pub fn new(use_id: UseId, mut supporting_papers: Vec<UsePaperMatch>, threshold_used: f64) -> Self {
        supporting_papers.sort_by(rank_order);
        OverlookedVerdict { use_id, overlooked: supporting_papers.is_empty(), supporting_papers, threshold_used }
    }

    pub fn overlooked(&self) -> bool {
        self.overlooked
    }

    pub fn supporting_papers(&self) -> &[UsePaperMatch] {
        &self.supporting_papers
    }
}

/// Supporting papers are those with similarity ≥ `threshold`.
pub fn flag_overlooked(uses: &[UseVector], index: &CorpusIndex, threshold: f64) -> Result<Vec<OverlookedVerdict>, IndexError> {
    let mut out = Vec::with_capacity(uses.len());
    for u in uses {
        check_dim(index, u)?;
        let support = (0..index.len())
            .filter_map(|i| {
                let s = cosine(u.vector.values(), index.row(i));
                (s >= threshold).then(|| UsePaperMatch { use_id: u.use_id, paper_id: index.ids[i].clone(), similarity: s })
            })
            .collect();
        out.push(OverlookedVerdict::new(u.use_id, support, threshold));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VenueCount {
    pub venue: String,
    pub papers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UseSupport {
    pub use_id: UseId,
    pub papers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiteratureStats {
    pub venues: Vec<VenueCount>,
    pub uses: Vec<UseSupport>,
}

/// Venues ranked by distinct supporting papers, uses by supporter count.
/// Ties fall back to venue name and use id.
pub fn literature_stats<'p>(verdicts: &[OverlookedVerdict], venues: impl Fn(&str) -> Option<&'p str>) -> LiteratureStats {
    let mut papers: BTreeMap<&str, ()> = BTreeMap::new();
    let mut uses: Vec<UseSupport> = verdicts
        .iter()
        .map(|v| {
            for m in &v.supporting_papers {
                papers.insert(m.paper_id.as_str(), ());
            }
            UseSupport { use_id: v.use_id, papers: v.supporting_papers.len() }
        })
        .collect();
    uses.sort_by(|a, b| b.papers.cmp(&a.papers).then(a.use_id.cmp(&b.use_id)));

    let mut per_venue: BTreeMap<String, usize> = BTreeMap::new();
    for id in papers.keys() {
        if let Some(v) = venues(id).map(str::trim).filter(|v| !v.is_empty()) {
            *per_venue.entry(v.to_string()).or_insert(0) += 1;
        }
    }
    let mut venues: Vec<VenueCount> = per_venue.into_iter().map(|(venue, papers)| VenueCount { venue, papers }).collect();
    venues.sort_by(|a, b| b.papers.cmp(&a.papers).then_with(|| a.venue.cmp(&b.venue)));
    LiteratureStats { venues, uses }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashedBagOfWords;
    use alloc::format;
    use alloc::vec;

    fn paper(id: &str, title: &str, abs: &str, lang: Option<&str>) -> PaperRecord {
        PaperRecord {
            paper_id: id.into(),
            title: title.into(),
            abstract_text: abs.into(),
            venue: Some("V".into()),
            language: lang.map(Into::into),
        }
    }

    #[test]
    fn ingest_drops_with_reasons() {
        let mut lines = String::new();
        for i in 0..10 {
            let abs = if i < 3 { "" } else { "An abstract." };
            lines.push_str(&format!("{{\"paper_id\":\"p{i}\",\"title\":\"T\",\"abstract\":\"{abs}\",\"venue\":null,\"language\":\"en\"}}\n"));
        }
        lines.push_str("{broken\n");
        let (kept, report) = ingest_corpus(&lines, UntaggedPolicy::Keep);
        assert_eq!(kept.len(), 7);
        assert_eq!(report.dropped(DropReason::MissingAbstract), 3);
        assert_eq!(report.malformed_lines, [11]);
        let (kept, report) = ingest_corpus("", UntaggedPolicy::Keep);
        assert!(kept.is_empty() && report.read == 0);
    }

    #[test]
    fn language_policy() {
        let mut f = CorpusFilter::new(UntaggedPolicy::Heuristic);
        assert!(f.push(paper("a", "Une étude", "Les visages", Some("fr"))).is_none());
        assert!(f.push(paper("b", "A study of faces", "We study the faces in the wild", None)).is_some());
        assert!(f.push(paper("c", "Gesichter", "Eine Studie", None)).is_none());
        assert!(f.push(paper("d", "Faces", "x", Some("en-GB"))).is_some());
        assert!(f.push(paper("d", "Faces", "x", Some("en"))).is_none());
        let r = f.finish();
        assert_eq!(r.dropped(DropReason::NonEnglish), 1);
        assert_eq!(r.dropped(DropReason::Untagged), 1);
        assert_eq!(r.dropped(DropReason::DuplicateId), 1);
    }

    #[test]
    fn nearest_rank_definition() {
        assert_eq!(nearest_rank(99.9, 1000), 999);
        assert_eq!(nearest_rank(95.0, 5000), 4750);
        assert_eq!(nearest_rank(50.0, 3), 2);
        assert_eq!(nearest_rank(1e-9, 10), 1);
        assert_eq!(nearest_rank(100.0, 10), 10);
    }

    fn small_index() -> (CorpusIndex, Vec<UseVector>) {
        let e = HashedBagOfWords::default();
        let papers = vec![
            paper("p2", "face recognition attendance", "school classrooms", Some("en")),
            paper("p1", "face recognition attendance", "school classrooms", Some("en")),
            paper("p3", "ocean acidification", "coral reefs", Some("en")),
        ];
        let idx = CorpusIndex::build(&e, &papers).unwrap();
        let u = UseVector { use_id: UseId(1), vector: e.embed("face recognition attendance school").unwrap() };
        (idx, vec![u])
    }

    #[test]
    fn ties_go_to_smallest_id() {
        let (idx, uses) = small_index();
        assert_eq!(best_match(&uses[0], &idx).unwrap().paper_id, "p1");
    }

    #[test]
    fn threshold_bounds() {
        let (idx, uses) = small_index();
        let all = flag_overlooked(&uses, &idx, 1.5).unwrap();
        assert!(all[0].overlooked());
        let none = flag_overlooked(&uses, &idx, -1.0).unwrap();
        assert_eq!(none[0].supporting_papers().len(), 3);
        let s = none[0].supporting_papers();
        assert!(s.windows(2).all(|w| w[0].similarity >= w[1].similarity));
    }

    #[test]
    fn calibration_probes() {
        let (idx, uses) = small_index();
        let c = calibrate_threshold(&idx, &uses, 50.0, PercentileBasis::PerPaper).unwrap();
        assert_eq!(c.distribution_size, 3);
        assert_eq!(c.probes.len(), 4);
        assert_eq!(c.papers_at_or_above, 2);
        assert!(calibrate_threshold(&idx, &uses, 0.0, PercentileBasis::PerPaper).is_err());
        let p = calibrate_threshold(&idx, &uses, 50.0, PercentileBasis::PerPair).unwrap();
        assert_eq!(p.distribution_size, 3);
    }

    #[test]
    fn stats_ranking() {
        let m = |u: u32, p: &str| UsePaperMatch { use_id: UseId(u), paper_id: p.into(), similarity: 0.9 };
        let verdicts = vec![
            OverlookedVerdict::new(UseId(2), vec![m(2, "b")], 0.5),
            OverlookedVerdict::new(UseId(1), vec![m(1, "a"), m(1, "b"), m(1, "c")], 0.5),
        ];
        let stats = literature_stats(&verdicts, |id| Some(if id == "c" { "Y" } else { "X" }));
        assert_eq!(stats.uses[0], UseSupport { use_id: UseId(1), papers: 3 });
        assert_eq!(stats.venues[0], VenueCount { venue: "X".into(), papers: 2 });
    }

    #[test]
    fn verdict_decode_checks_consistency() {
        let bad = r#"{"use_id":"1","overlooked":true,"supporting_papers":[{"use_id":"1","paper_id":"a","similarity":0.9}],"threshold_used":0.5}"#;
        assert!(serde_json::from_str::<OverlookedVerdict>(bad).is_err());
    }
}
