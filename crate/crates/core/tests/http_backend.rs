//! HTTP backends against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use dash_dts::embeddings::{CachedProvider, EmbeddingProvider, HttpEmbeddingProvider};
use dash_dts::llm::{Backend, ChatRequest, FixtureStore, HttpChat, LlmClient, Message, Outcome, RetryPolicy, Stage};
use serde_json::{json, Value};

struct Seen {
    path: String,
    auth: Option<String>,
    body: Value,
}

/// Serves `replies` (status, body) in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
            let (mut length, mut auth) = (0usize, None);
            loop {
                let mut header = String::new();
                reader.read_line(&mut header).unwrap();
                let header = header.trim_end();
                if header.is_empty() {
                    break;
                }
                let (name, value) = header.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => auth = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                path,
                auth,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen, handle)
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 3,
        base: Duration::from_millis(5),
        factor: 2.0,
    }
}

fn chat_reply(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn request() -> ChatRequest {
    ChatRequest::new("m", vec![Message::system("task: topic-segmentation"), Message::user("q")])
}

#[test]
fn chat_retries_rate_limit_then_succeeds() {
    let (url, seen, handle) = serve(vec![
        (429, r#"{"error":"slow down"}"#.into()),
        (200, chat_reply("{\"segments\":[]}")),
    ]);
    let chat = HttpChat::new(&url, Some("secret".into())).with_retry(fast_retry());
    assert_eq!(chat.complete(&request()).unwrap(), "{\"segments\":[]}");
    handle.join().unwrap();
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer secret"));
    assert_eq!(seen[1].body["model"], "m");
    assert_eq!(seen[1].body["temperature"], 0.0);
    assert_eq!(seen[1].body["messages"][1]["content"], "q");
}

#[test]
fn chat_client_errors_are_not_retried() {
    let (url, seen, handle) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
    let chat = HttpChat::new(&url, None).with_retry(fast_retry());
    let err = chat.complete(&request()).unwrap_err().to_string();
    assert!(err.contains("400"), "{err}");
    handle.join().unwrap();
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn chat_gives_up_after_max_attempts() {
    let (url, _, handle) = serve(vec![(500, "{}".into()), (502, "{}".into()), (503, "{}".into())]);
    let chat = HttpChat::new(&url, None).with_retry(fast_retry());
    let err = chat.complete(&request()).unwrap_err().to_string();
    assert!(err.contains("3 attempts"), "{err}");
    handle.join().unwrap();
}

#[test]
fn replay_miss_falls_through_to_network_and_records() {
    let (url, _, handle) = serve(vec![(200, chat_reply("hello"))]);
    let dir = tempfile::tempdir().unwrap();
    let client = LlmClient::new(Backend::Replay {
        fixtures: FixtureStore::new(dir.path()),
        strict: false,
        fallback: Some(Box::new(Backend::Http(HttpChat::new(&url, None).with_retry(fast_retry())))),
    });
    assert_eq!(client.complete(Stage::Segmentation, &request()).unwrap(), "hello");
    handle.join().unwrap();
    // second call is served from the fixture just written; the server is gone
    assert_eq!(client.complete(Stage::Segmentation, &request()).unwrap(), "hello");
    let outcomes: Vec<Outcome> = client.access_log().iter().map(|r| r.outcome).collect();
    assert_eq!(outcomes, [Outcome::ReplayMiss, Outcome::Network, Outcome::ReplayHit]);
    assert_eq!(client.summary().network_calls, 1);
}

#[test]
fn embeddings_endpoint_and_cache() {
    let reply = json!({"data": [
        {"index": 1, "embedding": [0.0, 1.0, 0.0]},
        {"index": 0, "embedding": [1.0, 0.0, 0.0]},
    ]})
    .to_string();
    let (url, seen, handle) = serve(vec![(429, "{}".into()), (200, reply)]);
    let inner = HttpEmbeddingProvider::new(&url, "emb", 3, None).with_retry(fast_retry());
    let dir = tempfile::tempdir().unwrap();
    let cache_path = dir.path().join("cache.json");
    let cached = CachedProvider::persistent(inner, &cache_path).unwrap();
    let out = cached.embed_batch(&["a", "b"]).unwrap();
    assert_eq!(out[0].values(), &[1.0, 0.0, 0.0]);
    assert_eq!(out[1].values(), &[0.0, 1.0, 0.0]);
    handle.join().unwrap();
    {
        let seen = seen.lock().unwrap();
        assert_eq!(seen[1].path, "/v1/embeddings");
        assert_eq!(seen[1].body, json!({"model": "emb", "input": ["a", "b"]}));
    }
    cached.save().unwrap();

    // a fresh provider pointing at a dead server answers from the cache file
    let dead = HttpEmbeddingProvider::new("http://127.0.0.1:9", "emb", 3, None).with_retry(fast_retry());
    let reloaded = CachedProvider::persistent(dead, &cache_path).unwrap();
    assert_eq!(reloaded.embed("b").unwrap().values(), &[0.0, 1.0, 0.0]);
}

#[test]
fn embeddings_dimension_checked() {
    let reply = json!({"data": [{"embedding": [1.0, 2.0]}]}).to_string();
    let (url, _, handle) = serve(vec![(200, reply)]);
    let p = HttpEmbeddingProvider::new(&url, "emb", 3, None).with_retry(fast_retry());
    let err = p.embed("a").unwrap_err().to_string();
    assert!(err.contains('3') && err.contains('2'), "{err}");
    handle.join().unwrap();
}
