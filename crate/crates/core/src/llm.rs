//! Chat-completion client over an OpenAI-compatible protocol with retry,
//! an in-flight limit, and a content-addressed record/replay fixture store.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, warn};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("replay cache miss for request {digest}")]
    CacheMiss { digest: String },
    #[error("scripted backend error: {0}")]
    Scripted(String),
    #[error("fixture store error: {0}")]
    Fixture(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature: 0.0,
            max_tokens: None,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} must be finite and >= 0",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Concatenated user-message content.
    pub fn user_text(&self) -> String {
        self.messages
            .iter()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn system_text(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

/// Model parameters shared by every pipeline call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub seed: Option<u64>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            model: "gpt-4o-mini".into(),
            temperature: 0.0,
            max_tokens: None,
            seed: None,
        }
    }
}

impl ModelSettings {
    pub fn request(&self, messages: Vec<Message>) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
        }
    }
}

/// Sends `messages`; if `parse` rejects the reply, asks once more with the
/// rejection reason and a request for bare JSON.
pub fn complete_with_repair<T, E: fmt::Display>(
    llm: &LlmClient,
    stage: Stage,
    settings: &ModelSettings,
    messages: Vec<Message>,
    parse: impl Fn(&str) -> Result<T, E>,
) -> Result<T, RepairError<E>> {
    let first = llm
        .complete(stage, &settings.request(messages.clone()))
        .map_err(RepairError::Llm)?;
    let err = match parse(&first) {
        Ok(v) => return Ok(v),
        Err(e) => e,
    };
    warn!(%stage, error = %err, "unusable reply, retrying with repair instruction");
    let mut retry = messages;
    retry.push(Message::assistant(first));
    retry.push(Message::user(format!(
        "Your previous reply could not be used: {err}. Return only the JSON object described in the output schema, with no other text."
    )));
    let second = llm
        .complete(stage, &settings.request(retry))
        .map_err(RepairError::Llm)?;
    parse(&second).map_err(RepairError::Parse)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepairError<E> {
    Llm(LlmError),
    Parse(E),
}

/// Serializes with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    fn write(value: &Value, out: &mut String) {
        match value {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String((*k).clone()).to_string());
                    out.push(':');
                    write(&map[*k], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(v, out);
                }
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}

/// SHA-256 of the canonical JSON form of the request.
pub fn canonical_digest(request: &ChatRequest) -> String {
    let value = serde_json::to_value(request).expect("request serializes");
    hex::encode(Sha256::digest(canonical_json(&value).as_bytes()))
}

/// Which pipeline stage issued a request. Recorded in the access log only;
/// it does not participate in the digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Handshake,
    Analysis,
    Synthesis,
    Segmentation,
    Other,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::Handshake,
        Stage::Analysis,
        Stage::Synthesis,
        Stage::Segmentation,
    ];

    /// Marker line that opens the system prompt of each stage.
    pub fn marker(self) -> &'static str {
        match self {
            Stage::Handshake => "task: handshake-tagging",
            Stage::Analysis => "task: context-analysis",
            Stage::Synthesis => "task: contrastive-synthesis",
            Stage::Segmentation => "task: topic-segmentation",
            Stage::Other => "task: other",
        }
    }

    pub fn detect(request: &ChatRequest) -> Stage {
        let first = request.system_text().lines().next().unwrap_or("").trim();
        Stage::ALL
            .into_iter()
            .find(|s| s.marker() == first)
            .unwrap_or(Stage::Other)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Handshake => "handshake",
            Stage::Analysis => "analysis",
            Stage::Synthesis => "synthesis",
            Stage::Segmentation => "segmentation",
            Stage::Other => "other",
        })
    }
}

/// Exponential backoff: `base * factor^(attempt-1)` between attempts.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base
            .mul_f64(self.factor.powi(attempt.saturating_sub(1) as i32))
    }

    /// Sends until a 2xx body arrives. 429, 5xx and connection failures are
    /// retried; other statuses fail immediately.
    pub fn run<F>(&self, mut send: F) -> Result<String, String>
    where
        F: FnMut() -> reqwest::Result<reqwest::blocking::Response>,
    {
        let attempts = self.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match send() {
                Ok(resp) => {
                    let status = resp.status();
                    let body = resp.text().map_err(|e| e.to_string())?;
                    if status.is_success() {
                        return Ok(body);
                    }
                    last = format!("HTTP {status}: {}", truncate(&body, 200));
                    if !(status.as_u16() == 429 || status.is_server_error()) {
                        return Err(last);
                    }
                }
                Err(e) => last = e.to_string(),
            }
            if attempt < attempts {
                let wait = self.delay(attempt);
                warn!(attempt, ?wait, error = %last, "retrying request");
                std::thread::sleep(wait);
            }
        }
        Err(format!("gave up after {attempts} attempts: {last}"))
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(
        ".{file_name}.tmp-{}-{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub digest: String,
    pub request: ChatRequest,
    pub response: String,
}

/// Directory of `<digest>.json` fixtures.
#[derive(Debug)]
pub struct FixtureStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl FixtureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn get(&self, digest: &str) -> Result<Option<String>, LlmError> {
        let path = self.path_for(digest);
        match fs::read(&path) {
            Ok(bytes) => {
                let fixture: Fixture = serde_json::from_slice(&bytes)
                    .map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
                Ok(Some(fixture.response))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(LlmError::Fixture(format!("{}: {e}", path.display()))),
        }
    }

    pub fn put(&self, request: &ChatRequest, response: &str) -> Result<String, LlmError> {
        let digest = canonical_digest(request);
        let fixture = Fixture {
            digest: digest.clone(),
            request: request.clone(),
            response: response.to_string(),
        };
        let mut bytes = serde_json::to_vec_pretty(&fixture).expect("fixture serializes");
        bytes.push(b'\n');
        let _guard = self.write_lock.lock().expect("fixture lock");
        write_atomic(&self.path_for(&digest), &bytes)
            .map_err(|e| LlmError::Fixture(e.to_string()))?;
        Ok(digest)
    }
}

pub type Responder = Arc<dyn Fn(&ChatRequest) -> Result<String, String> + Send + Sync>;

/// Live OpenAI-compatible HTTP backend.
pub struct HttpChat {
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl fmt::Debug for HttpChat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpChat")
            .field("base_url", &self.base_url)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

impl HttpChat {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key,
            retry: RetryPolicy::default(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(300))
                .build()
                .expect("http client"),
        }
    }

    /// Reads the key from the named environment variable, if set.
    pub fn from_env(base_url: impl Into<String>, key_var: &str) -> Self {
        Self::new(base_url, std::env::var(key_var).ok())
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn body(request: &ChatRequest) -> Value {
        let mut body = serde_json::json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        if let Some(m) = request.max_tokens {
            body["max_tokens"] = m.into();
        }
        if let Some(s) = request.seed {
            body["seed"] = s.into();
        }
        body
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let body = Self::body(request);
        let text = self
            .retry
            .run(|| {
                let mut req = self.client.post(self.endpoint()).json(&body);
                if let Some(key) = &self.api_key {
                    req = req.bearer_auth(key);
                }
                req.send()
            })
            .map_err(LlmError::Transport)?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| LlmError::Transport(format!("invalid response JSON: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Transport("response has no choices[0].message.content".into()))
    }
}

pub enum Backend {
    Http(HttpChat),
    /// Serves recorded fixtures. Misses fail when `strict` or when there is
    /// no fallback; otherwise the fallback answers and the result is recorded.
    Replay {
        fixtures: FixtureStore,
        strict: bool,
        fallback: Option<Box<Backend>>,
    },
    Scripted(Responder),
}

impl Backend {
    pub fn replay(dir: impl Into<PathBuf>, strict: bool) -> Self {
        Backend::Replay {
            fixtures: FixtureStore::new(dir),
            strict,
            fallback: None,
        }
    }

    pub fn scripted<F>(f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, String> + Send + Sync + 'static,
    {
        Backend::Scripted(Arc::new(f))
    }
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Http(h) => f.debug_tuple("Http").field(h).finish(),
            Backend::Replay { fixtures, strict, fallback } => f
                .debug_struct("Replay")
                .field("dir", &fixtures.dir())
                .field("strict", strict)
                .field("fallback", fallback)
                .finish(),
            Backend::Scripted(_) => f.write_str("Scripted"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    ReplayHit,
    ReplayMiss,
    /// Answered by an HTTP endpoint.
    Network,
    Scripted,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRecord {
    pub stage: Stage,
    pub digest: String,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessSummary {
    pub requests: usize,
    pub fixture_hits: usize,
    pub fixture_misses: usize,
    pub network_calls: usize,
    pub scripted_calls: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Http,
    Replay,
    Scripted,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" => Ok(Self::Http),
            "replay" => Ok(Self::Replay),
            "scripted" => Ok(Self::Scripted),
            other => Err(format!("unknown backend `{other}` (expected http, replay or scripted)")),
        }
    }
}

struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("limiter lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("limiter lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Thread-safe handle used by every pipeline stage.
pub struct LlmClient {
    backend: Backend,
    recorder: Option<FixtureStore>,
    limiter: Limiter,
    log: Mutex<Vec<AccessRecord>>,
}

impl LlmClient {
    pub fn new(backend: Backend) -> Self {
        Self {
            backend,
            recorder: None,
            limiter: Limiter::new(4),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn scripted<F>(f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, String> + Send + Sync + 'static,
    {
        Self::new(Backend::scripted(f))
    }

    /// Persists every live (non-replayed) response as a fixture in `dir`.
    pub fn recording(mut self, dir: impl Into<PathBuf>) -> Self {
        self.recorder = Some(FixtureStore::new(dir));
        self
    }

    pub fn max_in_flight(mut self, n: usize) -> Self {
        self.limiter = Limiter::new(n);
        self
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn complete(&self, stage: Stage, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        let digest = canonical_digest(request);
        let _permit = self.limiter.acquire();
        let result = self.dispatch(&self.backend, request, &digest, stage);
        if result.is_err() {
            self.log_access(stage, &digest, Outcome::Failed);
        }
        result
    }

    fn dispatch(
        &self,
        backend: &Backend,
        request: &ChatRequest,
        digest: &str,
        stage: Stage,
    ) -> Result<String, LlmError> {
        match backend {
            Backend::Http(http) => {
                let text = http.complete(request)?;
                self.log_access(stage, digest, Outcome::Network);
                self.record(request, &text)?;
                Ok(text)
            }
            Backend::Scripted(f) => {
                let text = f(request).map_err(LlmError::Scripted)?;
                self.log_access(stage, digest, Outcome::Scripted);
                self.record(request, &text)?;
                Ok(text)
            }
            Backend::Replay {
                fixtures,
                strict,
                fallback,
            } => {
                if let Some(text) = fixtures.get(digest)? {
                    debug!(%digest, %stage, "replay hit");
                    self.log_access(stage, digest, Outcome::ReplayHit);
                    return Ok(text);
                }
                self.log_access(stage, digest, Outcome::ReplayMiss);
                match fallback {
                    Some(inner) if !*strict => {
                        let text = self.dispatch(inner, request, digest, stage)?;
                        if self.recorder.is_none() {
                            fixtures.put(request, &text)?;
                        }
                        Ok(text)
                    }
                    _ => Err(LlmError::CacheMiss {
                        digest: digest.to_string(),
                    }),
                }
            }
        }
    }

    fn record(&self, request: &ChatRequest, text: &str) -> Result<(), LlmError> {
        if let Some(rec) = &self.recorder {
            rec.put(request, text)?;
        }
        Ok(())
    }

    fn log_access(&self, stage: Stage, digest: &str, outcome: Outcome) {
        self.log.lock().expect("log lock").push(AccessRecord {
            stage,
            digest: digest.to_string(),
            outcome,
        });
    }

    pub fn access_log(&self) -> Vec<AccessRecord> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn clear_log(&self) {
        self.log.lock().expect("log lock").clear();
    }

    pub fn summary(&self) -> AccessSummary {
        let log = self.log.lock().expect("log lock");
        let mut s = AccessSummary::default();
        for r in log.iter() {
            match r.outcome {
                Outcome::ReplayHit => s.fixture_hits += 1,
                Outcome::ReplayMiss => s.fixture_misses += 1,
                Outcome::Network => s.network_calls += 1,
                Outcome::Scripted => s.scripted_calls += 1,
                Outcome::Failed => {
                    s.failures += 1;
                    continue;
                }
            }
            if r.outcome != Outcome::ReplayMiss {
                s.requests += 1;
            }
        }
        s
    }
}
