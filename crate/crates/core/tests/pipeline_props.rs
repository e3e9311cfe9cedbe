use proptest::prelude::*;
use riskscope_core::card::{CardFields, LikertScore};
use riskscope_core::embed::{cosine, Embedder, EmbeddingVector, HashedBagOfWords};
use riskscope_core::overlooked::{
    calibrate_threshold, flag_overlooked, CorpusIndex, PercentileBasis, UseVector, PROBE_PERCENTILES,
};
use riskscope_core::risk::{risk_distribution, ActCorpus, RiskSettings};
use riskscope_core::usesgen::{deduplicate_uses, parse_uses_response, partition_by_realisticness, ParseMode};
use riskscope_core::*;

const LABELS: [&str; 3] = ["already existent", "upcoming", "unlikely"];

fn record() -> impl Strategy<Value = serde_json::Value> {
    (0usize..4, 0usize..4, 0usize..3, 0usize..3, any::<bool>()).prop_map(|(d, p, u, l, broken)| {
        let domain = ["Health", "Energy", "Smart home", "health"][d];
        let purpose = ["Track attendance", "track  attendance", "Detect fatigue", "Unlock doors"][p];
        let user = ["Schools", "Hospitals", "Utilities"][u];
        let mut v = serde_json::json!({
            "domain": domain,
            "purpose": purpose,
            "capability": "Recognise faces",
            "ai_user": user,
            "ai_subject": "People",
            "realisticness": LABELS[l],
            "justification": "Plausible."
        });
        if broken {
            v.as_object_mut().unwrap().remove("ai_subject");
        }
        v
    })
}

proptest! {
    #[test]
    fn dedup_is_idempotent_and_order_preserving(recs in prop::collection::vec(record(), 0..20)) {
        let text = serde_json::Value::Array(recs).to_string();
        let parsed = parse_uses_response(&text, ParseMode::Lenient).unwrap();
        let once = deduplicate_uses(parsed.uses.clone());
        let twice = deduplicate_uses(once.clone());
        prop_assert_eq!(&once, &twice);
        for (i, u) in once.iter().enumerate() {
            prop_assert_eq!(u.use_id, UseId(i as u32 + 1));
        }
        // surviving records keep their relative order
        let purposes: Vec<&str> = once.iter().map(|u| u.concepts.purpose()).collect();
        let mut it = parsed.uses.iter().map(|u| u.concepts.purpose());
        for p in purposes {
            prop_assert!(it.any(|q| q == p));
        }
    }

    #[test]
    fn lenient_and_strict_agree_on_valid_records(recs in prop::collection::vec(record(), 0..20)) {
        let text = serde_json::Value::Array(recs.clone()).to_string();
        let lenient = parse_uses_response(&text, ParseMode::Lenient).unwrap();
        let valid: Vec<serde_json::Value> = recs.into_iter().filter(|r| r.get("ai_subject").is_some()).collect();
        let strict = parse_uses_response(&serde_json::Value::Array(valid).to_string(), ParseMode::Strict).unwrap();
        prop_assert_eq!(&lenient.uses, &strict.uses);
        match parse_uses_response(&text, ParseMode::Strict) {
            Ok(all) => prop_assert!(lenient.skipped.is_empty() && all.uses == lenient.uses),
            Err(e) => prop_assert_eq!(Some(&e), lenient.skipped.first()),
        }
    }

    #[test]
    fn partition_is_exhaustive_and_disjoint(recs in prop::collection::vec(record(), 0..20)) {
        let text = serde_json::Value::Array(recs).to_string();
        let uses = parse_uses_response(&text, ParseMode::Lenient).unwrap().uses;
        let (real, unlikely) = partition_by_realisticness(&uses);
        prop_assert_eq!(real.len() + unlikely.len(), uses.len());
        prop_assert!(real.iter().all(|u| u.label().is_realistic()));
        prop_assert!(unlikely.iter().all(|u| !u.label().is_realistic()));
        prop_assert!(real.windows(2).all(|w| w[0].use_id < w[1].use_id));
    }

    #[test]
    fn tier_shares_are_conserved(tiers in prop::collection::vec(0usize..3, 1..200)) {
        let list: Vec<RiskAssessment> = tiers.iter().map(|&t| {
            let tier = RiskTier::ALL[t];
            let cite = tier.requires_citation().then(|| model::ActCitation::new("Article 5(1)(a)"));
            RiskAssessment::new(UseId(1), "d", tier, cite, "r").unwrap()
        }).collect();
        let d = risk_distribution(&list);
        prop_assert_eq!(d.tiers.iter().map(|t| t.count).sum::<usize>(), list.len());
        let sum: u32 = d.tiers.iter().map(|t| t.percent_rounded.unwrap()).sum();
        prop_assert!((99..=101).contains(&sum));
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(a in prop::collection::vec(-1.0f32..1.0, 16), b in prop::collection::vec(-1.0f32..1.0, 16)) {
        let x = cosine(&a, &b);
        prop_assert!((x - cosine(&b, &a)).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&x));
        if a.iter().any(|v| *v != 0.0) {
            let v = EmbeddingVector::normalized(a.iter().map(|x| *x as f64).collect()).unwrap();
            prop_assert!((cosine(v.values(), v.values()) - 1.0).abs() < 1e-6);
            prop_assert!((v.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn raising_the_percentile_never_lowers_overlooked(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dim = 8;
        let vec_of = |rng: &mut rand_chacha::ChaCha8Rng| {
            EmbeddingVector::normalized((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        let rows: Vec<(String, EmbeddingVector)> = (0..60).map(|i| (format!("p{i:03}"), vec_of(&mut rng))).collect();
        let index = CorpusIndex::from_vectors("t".into(), dim, rows).unwrap();
        let uses: Vec<UseVector> = (1..=10).map(|i| UseVector { use_id: UseId(i), vector: vec_of(&mut rng) }).collect();
        let mut last = 0;
        for p in PROBE_PERCENTILES {
            let c = calibrate_threshold(&index, &uses, p, PercentileBasis::PerPaper).unwrap();
            let over = flag_overlooked(&uses, &index, c.threshold).unwrap().iter().filter(|v| v.overlooked()).count();
            prop_assert!(over >= last);
            last = over;
        }
    }
}

fn sample_use() -> TechnologyUse {
    let c = UseConcepts::new("Law enforcement", "Identify suspects", "Match faces", "Police", "Passers-by").unwrap();
    TechnologyUse::new(UseId(7), c, RealisticnessVerdict::new(Realisticness::Upcoming, "Likely.").unwrap(), Some("Live matching".into()))
}

#[test]
fn serde_round_trips() {
    let u = sample_use();
    assert_eq!(serde_json::from_str::<TechnologyUse>(&serde_json::to_string(&u).unwrap()).unwrap(), u);
    let a = RiskAssessment::new(UseId(7), "d", RiskTier::Prohibited, Some(model::ActCitation::new("per Article 5(1)(d)")), "r").unwrap();
    assert_eq!(serde_json::from_str::<RiskAssessment>(&serde_json::to_string(&a).unwrap()).unwrap(), a);
    let card = AnnotationCard::new(CardFields {
        use_id: UseId(7),
        rater_id: "ce-1".into(),
        cohort: Cohort::ComplianceExpert,
        realisticness_vote: Realisticness::Upcoming,
        scores: LikertItem::ALL.iter().map(|&i| LikertScore::new(i, 4).unwrap()).collect(),
        classification_agreement: Some(ClassificationAgreement::Disagree),
        corrected_classification: Some(ExpertClassification::InsufficientInformation),
        reasoning_correction: Some("Too vague.".into()),
        usefulness_notes: None,
    })
    .unwrap();
    assert_eq!(serde_json::from_str::<AnnotationCard>(&serde_json::to_string(&card).unwrap()).unwrap(), card);
    let cat = DomainCatalog::reference();
    assert_eq!(serde_json::from_str::<DomainCatalog>(&serde_json::to_string(&cat).unwrap()).unwrap(), cat);
    let req = ChatRequest::new("s", "u", 0.3, "m", ResponseHint::FreeText).unwrap();
    assert_eq!(serde_json::from_str::<ChatRequest>(&serde_json::to_string(&req).unwrap()).unwrap(), req);
}

#[test]
fn risk_prompt_is_deterministic() {
    let corpus = ActCorpus::reference();
    let s = RiskSettings::new("gpt-4");
    let a = risk::build_risk_prompt("Facial Recognition", &sample_use(), &corpus, &s).unwrap();
    let b = risk::build_risk_prompt("Facial Recognition", &sample_use(), &corpus, &s).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.digest(), b.digest());
}

#[test]
fn hashed_provider_is_deterministic() {
    let e = HashedBagOfWords::default();
    assert_eq!(e.embed("face recognition attendance").unwrap(), e.embed("face recognition attendance").unwrap());
    assert_eq!(e.tag(), "hashed-bow-512");
}
