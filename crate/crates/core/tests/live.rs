//! The HTTP backend against a local stand-in server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use sabm_core::promptkit::PromptRegistry;
use sabm_core::provider::{
    Budget, ChatRequest, LiveConfig, LiveProvider, LlmSettings, Message, Provider, ProviderError, ScriptedProvider,
};
use sabm_core::runtime::{run, ExitReason, RunConfig, ScenarioKind};
use sabm_core::scenarios::{self, guess};
use serde_json::{json, Value};

struct Seen {
    auth: Option<String>,
    body: Value,
}

/// Serves `count` connections; `reply` maps each parsed body to a status
/// and a response body.
fn serve<F>(count: usize, reply: F) -> (String, Arc<Mutex<Vec<Seen>>>, thread::JoinHandle<()>)
where
    F: Fn(usize, &Value) -> (u16, String) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    let handle = thread::spawn(move || {
        for k in 0..count {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let (mut length, mut auth) = (0usize, None);
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut body = vec![0u8; length];
            reader.read_exact(&mut body).unwrap();
            let body: Value = serde_json::from_slice(&body).unwrap();
            let (status, text) = reply(k, &body);
            log.lock().unwrap().push(Seen { auth, body });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            )
            .unwrap();
        }
    });
    (base, seen, handle)
}

fn completion(content: &str) -> String {
    json!({
        "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 10, "completion_tokens": 2},
    })
    .to_string()
}

fn config(base: &str) -> LiveConfig {
    LiveConfig {
        base_delay: Duration::from_millis(5),
        ..LiveConfig::new(base, "test-key")
    }
}

fn request() -> ChatRequest {
    ChatRequest::new(
        LlmSettings::default(),
        vec![Message::system("s"), Message::user("hello")],
    )
    .unwrap()
}

#[test]
fn sends_the_wire_format_and_reads_the_reply() {
    let (base, seen, handle) = serve(1, |_, _| (200, completion("42")));
    let provider = LiveProvider::new(config(&base), Budget::new(10, 10_000)).unwrap();
    let response = provider.complete(&request()).unwrap();
    handle.join().unwrap();
    assert_eq!(response.content, "42");
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer test-key"));
    assert_eq!(seen[0].body["model"], "gpt-4-0613");
    assert_eq!(seen[0].body["messages"][1], json!({"role": "user", "content": "hello"}));
    assert_eq!(seen[0].body["max_tokens"], 256);
    assert_eq!(provider.budget().usage().tokens, 12);
}

#[test]
fn server_errors_are_retried() {
    let (base, seen, handle) = serve(3, |k, _| {
        if k < 2 {
            (503, "busy".into())
        } else {
            (200, completion("ok"))
        }
    });
    let provider = LiveProvider::new(config(&base), Budget::new(10, 10_000)).unwrap();
    assert_eq!(provider.complete(&request()).unwrap().content, "ok");
    handle.join().unwrap();
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn exhausted_retries_are_a_transport_error() {
    let (base, _, handle) = serve(3, |_, _| (500, "down".into()));
    let provider = LiveProvider::new(config(&base), Budget::new(10, 10_000)).unwrap();
    let err = provider.complete(&request()).unwrap_err();
    handle.join().unwrap();
    assert!(matches!(err, ProviderError::Transport(_)), "{err}");
    assert!(!err.is_fatal());
}

#[test]
fn rejected_credentials_fail_without_retry() {
    let (base, seen, handle) = serve(1, |_, _| (401, "no".into()));
    let provider = LiveProvider::new(config(&base), Budget::new(10, 10_000)).unwrap();
    let err = provider.complete(&request()).unwrap_err();
    handle.join().unwrap();
    assert!(matches!(err, ProviderError::Auth(_)));
    assert!(err.is_fatal());
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn call_budget_stops_before_the_network() {
    let (base, _, handle) = serve(1, |_, _| (200, completion("1")));
    let provider = LiveProvider::new(config(&base), Budget::new(1, 10_000)).unwrap();
    provider.complete(&request()).unwrap();
    handle.join().unwrap();
    assert!(matches!(
        provider.complete(&request()),
        Err(ProviderError::BudgetExceeded(_))
    ));
}

#[test]
fn empty_key_is_an_auth_error() {
    let err = LiveProvider::new(LiveConfig::new("http://127.0.0.1:9", " "), Budget::new(1, 1))
        .err()
        .unwrap();
    assert!(matches!(err, ProviderError::Auth(_)));
}

#[test]
fn a_full_run_over_http() {
    // The stand-in server answers with the scripted oracles.
    let oracle = ScriptedProvider::new(scenarios::scripted_oracles());
    let (base, _, handle) = serve(5, move |_, body| {
        let messages: Vec<Message> = serde_json::from_value(body["messages"].clone()).unwrap();
        let request = ChatRequest::new(LlmSettings::default(), messages).unwrap();
        (200, completion(&oracle.complete(&request).unwrap().content))
    });
    let provider = Arc::new(LiveProvider::new(config(&base), Budget::new(100, 1_000_000)).unwrap());
    let params = guess::GuessParams {
        target: Some(28),
        ..Default::default()
    };
    let out = run(
        &guess::GuessScenario::new(params),
        &RunConfig::new(ScenarioKind::Guess, 1, 20),
        Arc::new(PromptRegistry::builtin()),
        provider.clone(),
    )
    .unwrap();
    handle.join().unwrap();
    assert_eq!(out.state.trace(), vec![50, 25, 37, 31, 28]);
    assert!(matches!(out.result.exit, ExitReason::Endpoint { .. }));
    assert_eq!(provider.budget().usage().calls, 5);
}
