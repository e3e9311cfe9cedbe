mod common;

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use riskscope::api::{ApiState, JobContext};
use riskscope::inputs::reference_template;
use riskscope::runner::GatewaySetup;
use riskscope::store::Store;
use riskscope_core::risk::ActCorpus;
use serde_json::{json, Value};

use common::*;

/// Read-only fixture run shared by the tests that do not write.
fn shared_store() -> &'static PathBuf {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("api-shared-store");
        let _ = std::fs::remove_dir_all(&dir);
        replay_fixture_run(&dir, RUN, true);
        dir
    })
}

fn json_of(body: &str) -> Value {
    serde_json::from_str(body).unwrap_or_else(|e| panic!("{e}: {body}"))
}

fn developer_card(rater: &str, familiarity: i64) -> Value {
    json!({
        "rater_id": rater,
        "cohort": "developer",
        "realisticness_vote": "upcoming",
        "scores": {"familiarity": familiarity, "adoption": 4, "transformation": 4, "risk_society": 5, "risk_environment": 2},
    })
}

/// Count of `score` answers to `item` among developers over all uses.
fn developer_bin(report: &Value, item: &str, score: usize) -> u64 {
    report["evaluation"]["likert"]
        .as_array()
        .expect("likert rows")
        .iter()
        .find(|r| r["scope"] == "all" && r["cohort"] == "developer" && r["distribution"]["item"] == item)
        .unwrap_or_else(|| panic!("no developer row for {item}"))["distribution"]["counts"][score - 1]
        .as_u64()
        .expect("count")
}

#[test]
fn filters_detail_and_errors() {
    let server = serve(api_state(Store::open(shared_store()).unwrap()));
    let agent = http();
    let url = |p: &str| format!("{}{p}", server.base);

    let (s, body) = get(&agent, &url(&format!("/runs/{RUN}/uses?risk=prohibited&overlooked=false")));
    assert_eq!(s, 200);
    let rows = json_of(&body);
    assert!(rows.as_array().unwrap().iter().all(|r| r["risk"]["classification"] == "prohibited" && r["overlooked"] == false));

    let (s, body) = get(&agent, &url(&format!("/runs/{RUN}/uses?domain=health%20and%20healthcare")));
    assert_eq!(s, 200);
    assert_eq!(json_of(&body).as_array().unwrap().len(), 3);

    let (s, body) = get(&agent, &url(&format!("/runs/{RUN}/uses?risk=moderate")));
    assert_eq!(s, 400);
    assert_eq!(json_of(&body)["field"], "risk");
    let (s, body) = get(&agent, &url(&format!("/runs/{RUN}/uses?overlooked=maybe")));
    assert_eq!((s, json_of(&body)["field"].clone()), (400, json!("overlooked")));
    let (s, _) = get(&agent, &url(&format!("/runs/{RUN}/uses?colour=red")));
    assert_eq!(s, 400);

    let (s, body) = get(&agent, &url(&format!("/runs/{RUN}/uses/43")));
    assert_eq!(s, 200);
    let d = json_of(&body);
    assert_eq!(d["risk"]["classification"], "prohibited");
    assert!(d["annotations"].as_array().unwrap().len() >= 3);

    let (s, body) = get(&agent, &url(&format!("/runs/{RUN}/uses/999")));
    assert_eq!(s, 404);
    assert_eq!(json_of(&body)["error"], "unknown_use");
    assert_eq!(get(&agent, &url("/runs/missing/uses")).0, 404);
    assert_eq!(get(&agent, &url("/runs/..%2Fetc/uses")).0, 404);

    let (s, body) = get(&agent, &url(&format!("/runs/{RUN}")));
    assert_eq!(s, 200);
    let v = json_of(&body);
    assert_eq!(v["status"]["state"], "ready");
    assert_eq!(v["artifact"]["uses"].as_array().unwrap().len(), 138);
    let (_, body) = get(&agent, &url("/runs"));
    assert!(json_of(&body).as_array().unwrap().iter().any(|r| r["run_id"] == RUN));
    let (_, body) = get(&agent, &url("/catalog/domains"));
    assert_eq!(json_of(&body).as_array().unwrap().len(), 46);
}

#[test]
fn report_bytes_match_cli() {
    let dir = shared_store();
    let server = serve(api_state(Store::open(dir).unwrap()));
    let agent = http();
    let (s, api) = get(&agent, &format!("{}/runs/{RUN}/report", server.base));
    assert_eq!(s, 200);
    let cli_out = cli(&["--store", dir.to_str().unwrap(), "--format", "machine", "report", "--run", RUN]);
    assert_eq!(cli_out.code, 0, "{}", cli_out.stderr);
    assert_eq!(api, cli_out.stdout);

    let (s, text) = get(&agent, &format!("{}/runs/{RUN}/report?format=text", server.base));
    assert_eq!(s, 200);
    assert!(text.contains("Overlooked uses: 16 of 138"), "{text}");
    assert_eq!(get(&agent, &format!("{}/runs/{RUN}/report?format=xml", server.base)).0, 400);
}

#[test]
fn annotations_round_trip_into_report_and_export() {
    let tmp = tempfile::tempdir().unwrap();
    replay_fixture_run(tmp.path(), RUN, true);
    let server = serve(api_state(Store::open(tmp.path()).unwrap()));
    let agent = http();
    let report = || json_of(&get(&agent, &format!("{}/runs/{RUN}/report", server.base)).1);
    let before = developer_bin(&report(), "familiarity", 7);

    let post = |uid: u32, body: &Value| post_json(&agent, &format!("{}/runs/{RUN}/uses/{uid}/annotations", server.base), body);
    let (s, body) = post(27, &developer_card("dev-new", 7));
    assert_eq!(s, 201, "{body}");
    assert_eq!(developer_bin(&report(), "familiarity", 7), before + 1);

    // any resubmission is refused, identical or not
    assert_eq!(post(27, &developer_card("dev-new", 7)).0, 409);
    assert_eq!(post(27, &developer_card("dev-new", 6)).0, 409);

    let mut missing = developer_card("dev-other", 3);
    missing["scores"].as_object_mut().unwrap().remove("adoption");
    let (s, body) = post(27, &missing);
    assert_eq!(s, 400);
    assert_eq!(json_of(&body)["error"], "invalid_card");
    let (s, body) = post(27, &developer_card("dev-other", 9));
    assert_eq!((s, json_of(&body)["field"].clone()), (400, json!("familiarity")));
    assert_eq!(post(999, &developer_card("dev-other", 3)).0, 404);

    let expert = json!({
        "rater_id": "ce-new",
        "cohort": "compliance",
        "realisticness_vote": "already existent",
        "scores": {"familiarity": 2, "adoption": 2, "transformation": 3, "risk_society": 6, "risk_environment": 1},
        "classification_agreement": "disagree",
        "corrected_classification": "high risk",
        "reasoning_correction": "Biometric categorisation applies here.",
    });
    let (s, body) = post(43, &expert);
    assert_eq!(s, 201, "{body}");
    let mut no_correction = expert.clone();
    no_correction["rater_id"] = json!("ce-other");
    no_correction.as_object_mut().unwrap().remove("corrected_classification");
    assert_eq!(post(43, &no_correction).0, 400);

    let (s, csv) = get(&agent, &format!("{}/runs/{RUN}/export.csv", server.base));
    assert_eq!(s, 200);
    let line = csv.lines().find(|l| l.contains("ce-new")).expect("exported card");
    assert!(line.contains(",disagree,high risk,"), "{line}");

    // the log survives a fresh store handle
    let cards = Store::open(tmp.path()).unwrap().load_run(RUN).unwrap().annotations;
    assert!(cards.iter().any(|c| c.rater_id() == "ce-new"));
}

#[test]
fn post_runs_replays_in_the_background() {
    let tmp = tempfile::tempdir().unwrap();
    let setup = GatewaySetup { sources: vec![fixture_run().join("transcripts")], ..Default::default() };
    let jobs = JobContext {
        setup,
        template: reference_template(),
        model: "gpt-4".into(),
        generation_temperature: None,
        corpus: Some(ActCorpus::reference()),
        literature: None,
        concurrency: 4,
    };
    let state = ApiState { store: Arc::new(Store::open(tmp.path()).unwrap()), jobs: Arc::new(jobs) };
    let server = serve(state);
    let agent = http();

    let (s, body) = post_json(&agent, &format!("{}/runs", server.base), &json!({"technology": TECHNOLOGY, "run_id": "api-run"}));
    assert_eq!(s, 202, "{body}");
    assert_eq!(post_json(&agent, &format!("{}/runs", server.base), &json!({"technology": TECHNOLOGY, "run_id": "api-run"})).0, 409);
    assert_eq!(post_json(&agent, &format!("{}/runs", server.base), &json!({"technology": " "})).0, 400);

    let deadline = Instant::now() + Duration::from_secs(60);
    let view = loop {
        let v = json_of(&get(&agent, &format!("{}/runs/api-run", server.base)).1);
        match v["status"]["state"].as_str() {
            Some("ready") | Some("failed") => break v,
            _ if Instant::now() > deadline => panic!("job did not finish: {v}"),
            _ => std::thread::sleep(Duration::from_millis(50)),
        }
    };
    assert_eq!(view["status"]["state"], "ready", "{}", view["status"]);
    assert_eq!(view["artifact"]["uses"].as_array().unwrap().len(), 138);
    assert_eq!(view["artifact"]["risk"].as_array().unwrap().len(), 138);

    let (_, body) = get(&agent, &format!("{}/runs/api-run/uses?risk=prohibited", server.base));
    assert_eq!(json_of(&body).as_array().unwrap().len(), 10);
}
