//! The HTTP backend against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use riskscope::gateway::{Gateway, GatewayError, HttpBackend, Mode, RetryPolicy, TranscriptStore};
use riskscope_core::{ChatRequest, ResponseHint};
use serde_json::{json, Value};

struct Seen {
    headers: Vec<String>,
    body: Value,
}

/// Answers one connection per scripted `(status, body)` pair, then stops.
fn stub(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    let handle = std::thread::spawn(move || {
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen { headers, body: serde_json::from_slice(&buf).unwrap() });
            let mut out = stream;
            write!(out, "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len())
                .unwrap();
        }
    });
    (url, seen, handle)
}

fn completion(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn request() -> ChatRequest {
    ChatRequest::new("You label risks.", "Classify this use.", 0.0, "gpt-4", ResponseHint::ObjectNotation).unwrap()
}

fn fast(retries: u32) -> RetryPolicy {
    RetryPolicy { max_retries: retries, base_delay: Duration::from_millis(1) }
}

#[test]
fn record_live_retries_5xx_then_replays_offline() {
    let (url, seen, server) = stub(vec![(503, "{}".into()), (200, completion("{\"classification\": \"high risk\"}"))]);
    let dir = tempfile::tempdir().unwrap();
    let backend = Arc::new(HttpBackend::new(url, Some("sk-test".into()), Duration::from_secs(10)));
    let gw = Gateway::new(Mode::RecordLive, TranscriptStore::new(dir.path())).with_backend(backend).with_retry(fast(3));
    let text = gw.complete(&request()).unwrap();
    assert_eq!(text, "{\"classification\": \"high risk\"}");
    server.join().unwrap();

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert!(seen[0].headers.iter().any(|h| h == "authorization: Bearer sk-test" || h == "Authorization: Bearer sk-test"), "{:?}", seen[0].headers);
    assert_eq!(seen[1].body["model"], "gpt-4");
    assert_eq!(seen[1].body["temperature"], 0.0);
    assert_eq!(seen[1].body["messages"][0]["role"], "system");
    assert_eq!(seen[1].body["messages"][1]["content"], "Classify this use.");

    // replay needs no backend at all
    let replay = Gateway::new(Mode::Replay, TranscriptStore::new(dir.path()));
    assert_eq!(replay.complete(&request()).unwrap(), text);
    let digest = request().digest();
    let file: Value = serde_json::from_str(&std::fs::read_to_string(TranscriptStore::new(dir.path()).path(&digest)).unwrap()).unwrap();
    assert_eq!(file["response_text"], text);
    assert!(file["recorded_at"].is_string() && file["request"].is_object());
}

#[test]
fn client_errors_surface_status_without_retry() {
    let (url, seen, server) = stub(vec![(401, "{\"error\": \"bad key\"}".into())]);
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::new(Mode::Live, TranscriptStore::new(dir.path()))
        .with_backend(Arc::new(HttpBackend::new(url, None, Duration::from_secs(10))))
        .with_retry(fast(3));
    let e = gw.complete(&request()).unwrap_err();
    server.join().unwrap();
    assert!(matches!(e, GatewayError::ProviderError { status: 401, .. }), "{e}");
    assert!(e.is_network());
    assert_eq!(seen.lock().unwrap().len(), 1);
    // live mode records nothing
    assert!(TranscriptStore::new(dir.path()).digests().unwrap().is_empty());
}

#[test]
fn exhausted_retries_and_unusable_bodies() {
    let (url, seen, server) = stub(vec![(500, "{}".into()), (502, "{}".into()), (200, "{\"choices\": []}".into())]);
    let dir = tempfile::tempdir().unwrap();
    let backend = Arc::new(HttpBackend::new(url, None, Duration::from_secs(10)));
    let gw = Gateway::new(Mode::Live, TranscriptStore::new(dir.path())).with_backend(backend.clone()).with_retry(fast(1));
    let e = gw.complete(&request()).unwrap_err();
    assert!(matches!(e, GatewayError::ProviderError { status: 502, .. }), "{e}");
    let e = gw.complete(&request()).unwrap_err();
    assert!(matches!(e, GatewayError::BadResponse(_)), "{e}");
    server.join().unwrap();
    assert_eq!(seen.lock().unwrap().len(), 3);

    // nothing listening: transport error after 1 + N attempts
    let dead = Gateway::new(Mode::Live, TranscriptStore::new(dir.path()))
        .with_backend(Arc::new(HttpBackend::new("http://127.0.0.1:9/v1/chat/completions", None, Duration::from_secs(5))))
        .with_retry(fast(2));
    assert!(matches!(dead.complete(&request()), Err(GatewayError::TransportError { attempts: 3, .. })));
}
