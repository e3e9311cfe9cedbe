//! Records the replay transcripts for the fixture run from the response files
//! in `fixtures/fixture_run/source/`.
//!
//! Request digests depend on the prompt renderer, so rerun this after any
//! change to templates or prompt code:
//!
//!     cargo run -p riskscope --example build_fixtures

use std::collections::BTreeMap;
use std::path::PathBuf;

use riskscope::gateway::{Transcript, TranscriptStore};
use riskscope::inputs::reference_template;
use riskscope_core::risk::{build_risk_prompt, ActCorpus, RiskSettings};
use riskscope_core::usesgen::{assemble, build_usesgen_prompt, parse_uses_response, GenerationSettings, ParseMode};
use riskscope_core::UseId;

const TECHNOLOGY: &str = "Facial Recognition and Analysis";
const MODEL: &str = "gpt-4";
const RECORDED_AT: &str = "2024-03-01T00:00:00Z";
const EXEMPLARS: [(u32, &str); 3] = [(43, "prohibited"), (127, "high_risk"), (121, "limited_or_low_risk")];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let run = root.join("fixture_run");
    let src = run.join("source");
    let out_dir = run.join("transcripts");
    if out_dir.exists() {
        std::fs::remove_dir_all(&out_dir)?;
    }
    let store = TranscriptStore::new(&out_dir);

    let template = reference_template();
    let gen_text = std::fs::read_to_string(src.join("generation_response.txt"))?;
    let gen_req = build_usesgen_prompt(TECHNOLOGY, &template, &GenerationSettings::new(MODEL))?;
    store.save(&Transcript::new(gen_req, gen_text.clone(), RECORDED_AT))?;

    let parsed = parse_uses_response(&gen_text, ParseMode::Strict)?;
    let (uses, _, counts) = assemble(vec![parsed], template.domains());
    eprintln!("generation: {counts:?}");

    let mut responses: BTreeMap<UseId, String> = BTreeMap::new();
    for line in std::fs::read_to_string(src.join("risk_responses.jsonl"))?.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line)?;
        let id: UseId = v["use_id"].as_str().ok_or("use_id")?.parse()?;
        responses.insert(id, v["response"].as_str().ok_or("response")?.to_string());
    }
    let corpus = ActCorpus::reference();
    let settings = RiskSettings::new(MODEL);
    for u in &uses {
        let text = responses.get(&u.use_id).ok_or_else(|| format!("no risk response for use {}", u.use_id))?;
        let req = build_risk_prompt(TECHNOLOGY, u, &corpus, &settings)?;
        store.save(&Transcript::new(req, text.clone(), RECORDED_AT))?;
    }

    let ex_dir = root.join("risk_exemplars");
    std::fs::create_dir_all(&ex_dir)?;
    for (id, name) in EXEMPLARS {
        let text = &responses[&UseId(id)];
        std::fs::write(ex_dir.join(format!("use_{id:03}_{name}.txt")), text)?;
    }
    eprintln!("wrote {} transcripts to {}", store.digests()?.len(), out_dir.display());
    Ok(())
}
