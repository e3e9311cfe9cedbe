//! Stage orchestration over the gateway: generation, classification and
//! the literature filter.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use riskscope_core::artifact::{GenerationReport, RiskFailure, Stage};
use riskscope_core::embed::Embedder;
use riskscope_core::overlooked::{
    calibrate_threshold, embed_uses, flag_overlooked, literature_stats, Calibration, CorpusIndex, IndexError, LiteratureStats,
    OverlookedVerdict, PaperRecord, PercentileBasis,
};
use riskscope_core::risk::{build_risk_prompt, parse_risk_response, ActCorpus, RiskPromptError, RiskSettings};
use riskscope_core::usesgen::{assemble, build_usesgen_prompt, parse_uses_response, GenerationSettings, ParseMode, PromptError, UsesGenTemplate, UsesParseError};
use riskscope_core::{ChatRequest, RiskAssessment, TechnologyUse, TranscriptRef};

use crate::gateway::{Gateway, GatewayError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("generate: {0}")]
    Prompt(#[from] PromptError),
    #[error("classify: {0}")]
    RiskPrompt(#[from] RiskPromptError),
    #[error("{stage}: {source}")]
    Gateway { stage: &'static str, source: GatewayError },
    #[error("generate: chunk {chunk}: {source}")]
    Parse { chunk: usize, source: UsesParseError },
    #[error("overlooked: {0}")]
    Index(#[from] IndexError),
    #[error("{0}: run has no uses")]
    NoUses(&'static str),
}

impl PipelineError {
    pub fn is_network(&self) -> bool {
        matches!(self, PipelineError::Gateway { source, .. } if source.is_network())
    }
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub settings: GenerationSettings,
    /// Domains per request; `None` sends the whole catalog at once.
    pub chunk_size: Option<usize>,
    pub parse_mode: ParseMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub uses: Vec<TechnologyUse>,
    pub report: GenerationReport,
    pub transcripts: Vec<TranscriptRef>,
}

/// Builds one request per domain chunk, sends them concurrently and merges
/// the parsed uses in chunk order.
pub fn generate_uses(gw: &Gateway, technology: &str, template: &UsesGenTemplate, opts: &GenerateOptions) -> Result<Generated, PipelineError> {
    let chunks = match opts.chunk_size {
        Some(n) if n > 0 && n < template.domains().len() => template.chunked(n),
        _ => vec![template.clone()],
    };
    let requests: Vec<ChatRequest> =
        chunks.iter().map(|t| build_usesgen_prompt(technology, t, &opts.settings)).collect::<Result<_, _>>()?;
    let responses: Vec<Result<String, GatewayError>> = std::thread::scope(|s| {
        let handles: Vec<_> = requests.iter().map(|r| s.spawn(move || gw.complete(r))).collect();
        handles.into_iter().map(|h| h.join().expect("generation worker panicked")).collect()
    });
    let mut parsed = Vec::with_capacity(responses.len());
    for (chunk, resp) in responses.into_iter().enumerate() {
        let text = resp.map_err(|source| PipelineError::Gateway { stage: "generate", source })?;
        parsed.push(parse_uses_response(&text, opts.parse_mode).map_err(|source| PipelineError::Parse { chunk, source })?);
    }
    let (uses, skipped, counts) = assemble(parsed, template.domains());
    let transcripts = requests.iter().map(|r| TranscriptRef { stage: Stage::Generate, use_id: None, digest: r.digest() }).collect();
    Ok(Generated { uses, report: GenerationReport { counts, skipped }, transcripts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classified {
    pub assessments: Vec<RiskAssessment>,
    pub failures: Vec<RiskFailure>,
    pub transcripts: Vec<TranscriptRef>,
}

/// Classifies every use with up to `concurrency` requests in flight.
///
/// Per-use problems (missing or damaged transcript, unparseable answer) are
/// recorded as failures; provider and network errors abort the stage.
pub fn classify_uses(
    gw: &Gateway,
    technology: &str,
    uses: &[TechnologyUse],
    corpus: &ActCorpus,
    settings: &RiskSettings,
    concurrency: usize,
) -> Result<Classified, PipelineError> {
    if uses.is_empty() {
        return Err(PipelineError::NoUses("classify"));
    }
    let requests: Vec<ChatRequest> = uses.iter().map(|u| build_risk_prompt(technology, u, corpus, settings)).collect::<Result<_, _>>()?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<String, GatewayError>>>> = Mutex::new((0..uses.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..concurrency.clamp(1, uses.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= requests.len() {
                    break;
                }
                let r = gw.complete(&requests[i]);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });
    let slots = slots.into_inner().unwrap_or_else(|e| e.into_inner());
    let mut out = Classified { assessments: Vec::new(), failures: Vec::new(), transcripts: Vec::new() };
    for ((u, req), slot) in uses.iter().zip(&requests).zip(slots) {
        let fail = |kind: &str, message: String| RiskFailure { use_id: u.use_id, stage: "classify".into(), kind: kind.into(), message };
        match slot.expect("every slot filled") {
            Ok(text) => {
                out.transcripts.push(TranscriptRef { stage: Stage::Classify, use_id: Some(u.use_id), digest: req.digest() });
                match parse_risk_response(&text, u.use_id) {
                    Ok(a) => out.assessments.push(a),
                    Err(e) => out.failures.push(fail(e.kind(), e.to_string())),
                }
            }
            Err(e) if e.is_network() || matches!(e, GatewayError::NoBackend(_) | GatewayError::Store(_)) => {
                return Err(PipelineError::Gateway { stage: "classify", source: e })
            }
            Err(e) => out.failures.push(fail(e.kind(), e.to_string())),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub verdicts: Vec<OverlookedVerdict>,
    pub calibration: Calibration,
    pub literature: LiteratureStats,
}

/// Calibrates the similarity threshold on the corpus and flags uses
/// without a supporting paper.
pub fn run_overlooked<E: Embedder + ?Sized>(
    uses: &[TechnologyUse],
    papers: &[PaperRecord],
    index: &CorpusIndex,
    embedder: &E,
    percentile: f64,
    basis: PercentileBasis,
) -> Result<Filtered, PipelineError> {
    if uses.is_empty() {
        return Err(PipelineError::NoUses("overlooked"));
    }
    let vectors = embed_uses(&embedder, uses)?;
    let calibration = calibrate_threshold(index, &vectors, percentile, basis)?;
    let verdicts = flag_overlooked(&vectors, index, calibration.threshold)?;
    let venues: HashMap<&str, &str> = papers.iter().filter_map(|p| p.venue.as_deref().map(|v| (p.paper_id.as_str(), v))).collect();
    let literature = literature_stats(&verdicts, |id| venues.get(id).copied());
    Ok(Filtered { verdicts, calibration, literature })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatBackend, BackendError, Mode, TranscriptStore};
    use crate::inputs::reference_template;
    use riskscope_core::embed::HashedBagOfWords;
    use riskscope_core::{Realisticness, RealisticnessVerdict, RiskTier, UseConcepts, UseId};
    use std::sync::Arc;

    /// Answers generation prompts with two uses per listed domain and risk
    /// prompts with a fixed classification.
    struct Echo;

    impl ChatBackend for Echo {
        fn send(&self, r: &ChatRequest) -> Result<String, BackendError> {
            if r.system_text().contains("Judge") {
                return Ok(r#"{"description": "d", "classification": "Limited or Low Risk", "relevant_text": "", "reasoning": "fine"}"#.into());
            }
            let domains: Vec<&str> = r
                .user_text()
                .split("## Domains")
                .nth(1)
                .unwrap()
                .split("## Examples")
                .next()
                .unwrap()
                .lines()
                .filter_map(|l| l.strip_prefix("- "))
                .collect();
            let recs: Vec<serde_json::Value> = domains
                .iter()
                .flat_map(|d| {
                    (0..2).map(move |k| {
                        serde_json::json!({"domain": d, "purpose": format!("purpose {k}"), "capability": "c", "ai_user": "u",
                            "ai_subject": "s", "realisticness": "upcoming", "justification": "j"})
                    })
                })
                .collect();
            Ok(serde_json::Value::Array(recs).to_string())
        }
    }

    fn live(dir: &std::path::Path) -> Gateway {
        Gateway::new(Mode::RecordLive, TranscriptStore::new(dir)).with_backend(Arc::new(Echo))
    }

    fn opts(chunk: Option<usize>) -> GenerateOptions {
        GenerateOptions { settings: GenerationSettings::new("gpt-4"), chunk_size: chunk, parse_mode: ParseMode::Lenient }
    }

    #[test]
    fn chunking_preserves_catalog_order() {
        let dir = tempfile::tempdir().unwrap();
        let t = reference_template();
        let whole = generate_uses(&live(dir.path()), "FR", &t, &opts(None)).unwrap();
        let chunked = generate_uses(&live(dir.path()), "FR", &t, &opts(Some(7))).unwrap();
        assert_eq!(whole.uses, chunked.uses);
        assert_eq!(whole.uses.len(), t.domains().len() * 2);
        assert_eq!(chunked.transcripts.len(), t.domains().len().div_ceil(7));
        // everything recorded can be replayed offline
        let replay = Gateway::new(Mode::Replay, TranscriptStore::new(dir.path()));
        assert_eq!(generate_uses(&replay, "FR", &t, &opts(Some(7))).unwrap(), chunked);
    }

    fn uses(n: u32) -> Vec<TechnologyUse> {
        (1..=n)
            .map(|i| {
                let c = UseConcepts::new("Health and Healthcare", format!("purpose {i}"), "cap", "user", "subject").unwrap();
                TechnologyUse::new(UseId(i), c, RealisticnessVerdict::new(Realisticness::Upcoming, "j").unwrap(), None)
            })
            .collect()
    }

    #[test]
    fn classification_fans_out_and_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        let c = classify_uses(&live(dir.path()), "FR", &uses(25), &ActCorpus::reference(), &RiskSettings::new("gpt-4"), 6).unwrap();
        assert_eq!(c.assessments.len(), 25);
        assert!(c.assessments.windows(2).all(|w| w[0].use_id < w[1].use_id));
        assert!(c.assessments.iter().all(|a| a.classification == RiskTier::LimitedOrLowRisk));
    }

    #[test]
    fn replay_misses_become_inline_failures() {
        let dir = tempfile::tempdir().unwrap();
        let g = Gateway::new(Mode::Replay, TranscriptStore::new(dir.path()));
        let c = classify_uses(&g, "FR", &uses(3), &ActCorpus::reference(), &RiskSettings::new("gpt-4"), 2).unwrap();
        assert_eq!(c.failures.len(), 3);
        assert_eq!(c.failures[0].kind, "transcript_miss");
    }

    #[test]
    fn incomplete_act_corpus_aborts_before_any_request() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = ActCorpus::new(ActCorpus::reference().without("Article 5")).unwrap();
        let r = classify_uses(&live(dir.path()), "FR", &uses(2), &corpus, &RiskSettings::new("gpt-4"), 2);
        assert!(matches!(r, Err(PipelineError::RiskPrompt(RiskPromptError::IncompleteCorpus(_)))));
        assert!(TranscriptStore::new(dir.path()).digests().unwrap().is_empty());
    }

    #[test]
    fn overlooked_on_tiny_corpus() {
        let e = HashedBagOfWords::default();
        let mut u = uses(1);
        let c = UseConcepts::new("Smart home", "Unlock doors", "Match residents", "Owners", "Visitors").unwrap();
        u.push(TechnologyUse::new(UseId(2), c, RealisticnessVerdict::new(Realisticness::Upcoming, "j").unwrap(), None));
        let papers = vec![PaperRecord {
            paper_id: "P1".into(),
            title: "purpose 1".into(),
            abstract_text: "cap Health and Healthcare".into(),
            venue: Some("V".into()),
            language: None,
        }];
        let idx = CorpusIndex::build(&e, &papers).unwrap();
        let f = run_overlooked(&u, &papers, &idx, &e, 100.0, PercentileBasis::PerPaper).unwrap();
        assert!(!f.verdicts[0].overlooked());
        assert!(f.verdicts[1].overlooked());
        assert_eq!(f.literature.venues[0].papers, 1);
    }
}
