//! Clients for the external embedding, classification and extraction
//! providers, with digest-keyed fixture recording and replay.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::GraphPayload;
use crate::kernel::EmbeddingVector;
use crate::subspace::Dimension;

pub const OP_EMBED: &str = "embed_text";
pub const OP_CLASSIFY: &str = "classify_citation";
pub const OP_GRAPH: &str = "extract_reasoning_graph";
pub const OP_DECOMPOSE: &str = "extract_decomposition";

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed response at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("no fixture entry for {op} request {digest}")]
    FixtureMiss { op: String, digest: String },
    #[error("fixture digest collision on {0}")]
    FixtureCollision(String),
    #[error("fixture file {path}: {message}")]
    Fixture { path: PathBuf, message: String },
    #[error("embedding dimension changed mid-session: expected {expected}, got {found}")]
    DimensionDrift { expected: usize, found: usize },
    #[error("invalid provider configuration: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidInput(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_) | ProviderError::Timeout(_))
    }

    pub fn is_schema(&self) -> bool {
        matches!(self, ProviderError::Parse { .. } | ProviderError::Schema(_))
    }

    fn parse(bytes: &[u8], e: serde_json::Error) -> Self {
        ProviderError::Parse { offset: byte_offset(bytes, e.line(), e.column()), message: e.to_string() }
    }
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut start = 0;
    for _ in 1..line {
        match bytes[start..].iter().position(|&b| b == b'\n') {
            Some(p) => start += p + 1,
            None => break,
        }
    }
    (start + column.saturating_sub(1)).min(bytes.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Live,
    #[default]
    Replay,
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model_name: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub fixture_path: Option<PathBuf>,
    pub mode: ProviderMode,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: "http://127.0.0.1:8080/v1".into(),
            model_name: "default".into(),
            timeout_ms: 30_000,
            max_retries: 3,
            backoff_ms: 200,
            fixture_path: None,
            mode: ProviderMode::Replay,
        }
    }
}

impl ProviderConfig {
    pub fn replay(fixture_path: impl Into<PathBuf>) -> Self {
        ProviderConfig { fixture_path: Some(fixture_path.into()), mode: ProviderMode::Replay, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.timeout_ms == 0 {
            return Err(ProviderError::Config("timeout must be positive".into()));
        }
        if self.mode != ProviderMode::Live && self.fixture_path.is_none() {
            return Err(ProviderError::Config(format!("{:?} mode requires fixture_path", self.mode).to_lowercase()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

/// Moves one request document to the provider and returns the raw response.
pub trait Transport: Send + Sync {
    fn send(&self, endpoint: &str, request: &Value, timeout: Duration) -> Result<Vec<u8>, ProviderError>;
}

/// Refuses every request and counts attempts. Used wherever the network
/// must not be touched.
#[derive(Debug, Default)]
pub struct NoNetwork {
    attempts: AtomicUsize,
}

impl NoNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

impl Transport for NoNetwork {
    fn send(&self, endpoint: &str, _request: &Value, _timeout: Duration) -> Result<Vec<u8>, ProviderError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        Err(ProviderError::Transport(format!("network use forbidden (attempted {endpoint})")))
    }
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn send(&self, endpoint: &str, request: &Value, timeout: Duration) -> Result<Vec<u8>, ProviderError> {
        self.as_ref().send(endpoint, request, timeout)
    }
}

/// Transport backed by a closure; stands in for a live service in tests
/// and record runs.
pub struct FnTransport<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F> FnTransport<F>
where
    F: Fn(&Value) -> Result<Vec<u8>, ProviderError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnTransport { f, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> Transport for FnTransport<F>
where
    F: Fn(&Value) -> Result<Vec<u8>, ProviderError> + Send + Sync,
{
    fn send(&self, _endpoint: &str, request: &Value, _timeout: Duration) -> Result<Vec<u8>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(request)
    }
}

#[cfg(feature = "http")]
pub struct HttpTransport {
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
        HttpTransport { agent: config.into() }
    }
}

#[cfg(feature = "http")]
impl Transport for HttpTransport {
    fn send(&self, endpoint: &str, request: &Value, timeout: Duration) -> Result<Vec<u8>, ProviderError> {
        let op = request.get("op").and_then(Value::as_str).unwrap_or("call");
        let url = format!("{}/{}", endpoint.trim_end_matches('/'), op);
        let mut req = self.agent.post(&url);
        if let Ok(key) = std::env::var("IDEASPACE_API_KEY") {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::to_vec(request).expect("json values serialize");
        let mut resp = req.header("Content-Type", "application/json").send(&body[..]).map_err(|e| match e {
            ureq::Error::Timeout(_) => ProviderError::Timeout(timeout),
            other => ProviderError::Transport(other.to_string()),
        })?;
        resp.body_mut().read_to_vec().map_err(|e| ProviderError::Transport(e.to_string()))
    }
}

/// Canonical form used for digests: object keys sorted, string whitespace
/// collapsed to single spaces and trimmed.
pub fn canonicalize(v: &Value) -> Value {
    match v {
        Value::String(s) => Value::String(s.split_whitespace().collect::<Vec<_>>().join(" ")),
        Value::Array(items) => Value::Array(items.iter().map(canonicalize).collect()),
        Value::Object(map) => {
            let mut sorted: Vec<(&String, &Value)> = map.iter().collect();
            sorted.sort_by(|a, b| a.0.cmp(b.0));
            Value::Object(sorted.into_iter().map(|(k, v)| (k.clone(), canonicalize(v))).collect())
        }
        other => other.clone(),
    }
}

pub fn request_digest(request: &Value) -> String {
    let text = serde_json::to_string(&canonicalize(request)).expect("json values serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn build_request(op: &str, model: &str, payload: Value, attempt: u32) -> Value {
    let mut req = json!({ "op": op, "model": model, "payload": payload });
    if attempt > 0 {
        req["attempt"] = json!(attempt);
    }
    req
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub digest: String,
    pub request: Value,
    pub response: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureFooter {
    entries: usize,
    index: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FooterLine {
    footer: FixtureFooter,
}

/// Digest-keyed response log. One entry per line in record order, then
/// a footer line listing every digest.
#[derive(Debug, Clone, Default)]
pub struct Fixture {
    entries: Vec<FixtureEntry>,
    by_digest: HashMap<String, usize>,
}

impl Fixture {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[FixtureEntry] {
        &self.entries
    }

    pub fn get(&self, digest: &str) -> Option<&FixtureEntry> {
        self.by_digest.get(digest).map(|&i| &self.entries[i])
    }

    /// Inserts a response. Re-inserting the same request is a no-op; a
    /// different request under an existing digest is a collision.
    pub fn insert(&mut self, request: Value, response: impl Into<String>) -> Result<String, ProviderError> {
        let digest = request_digest(&request);
        if let Some(existing) = self.get(&digest) {
            if canonicalize(&existing.request) != canonicalize(&request) {
                return Err(ProviderError::FixtureCollision(digest));
            }
            return Ok(digest);
        }
        self.by_digest.insert(digest.clone(), self.entries.len());
        self.entries.push(FixtureEntry { digest: digest.clone(), request, response: response.into() });
        Ok(digest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let err = |message: String| ProviderError::Fixture { path: path.to_path_buf(), message };
        let file = File::open(path).map_err(|e| err(e.to_string()))?;
        let mut fixture = Fixture::new();
        let mut footer = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            if footer.is_some() {
                return Err(err(format!("line {}: content after footer", i + 1)));
            }
            if let Ok(f) = serde_json::from_str::<FooterLine>(&line) {
                footer = Some(f.footer);
                continue;
            }
            let entry: FixtureEntry = serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
            let digest = request_digest(&entry.request);
            if digest != entry.digest {
                return Err(err(format!("line {}: digest does not match request", i + 1)));
            }
            fixture.insert(entry.request, entry.response)?;
        }
        if let Some(f) = footer {
            let digests: Vec<String> = fixture.entries.iter().map(|e| e.digest.clone()).collect();
            if f.entries != fixture.len() || f.index != digests {
                return Err(err("footer index does not match entries".into()));
            }
        }
        Ok(fixture)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ProviderError> {
        let path = path.as_ref();
        let err = |e: std::io::Error| ProviderError::Fixture { path: path.to_path_buf(), message: e.to_string() };
        let mut out = BufWriter::new(File::create(path).map_err(err)?);
        for e in &self.entries {
            writeln!(out, "{}", serde_json::to_string(e).expect("entries serialize")).map_err(err)?;
        }
        let footer = FooterLine {
            footer: FixtureFooter { entries: self.len(), index: self.entries.iter().map(|e| e.digest.clone()).collect() },
        };
        writeln!(out, "{}", serde_json::to_string(&footer).expect("footer serializes")).map_err(err)?;
        out.flush().map_err(err)
    }
}

/// Runs `f` with attempt 0; on a schema failure runs it once more with
/// attempt 1. If the retry has no recorded response the first error wins.
pub fn with_schema_retry<T>(mut f: impl FnMut(u32) -> Result<T, ProviderError>) -> Result<T, ProviderError> {
    match f(0) {
        Err(first) if first.is_schema() => {
            log::warn!("provider response rejected ({first}); re-requesting once");
            match f(1) {
                Err(ProviderError::FixtureMiss { .. }) => Err(first),
                other => other,
            }
        }
        other => other,
    }
}

/// One client for all four provider contracts.
pub struct ProviderClient {
    config: ProviderConfig,
    transport: Box<dyn Transport>,
    fixture: Mutex<Fixture>,
    dirty: Mutex<bool>,
    embed_dim: Mutex<Option<usize>>,
    warnings: Mutex<Vec<String>>,
}

impl std::fmt::Debug for ProviderClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderClient").field("config", &self.config).finish_non_exhaustive()
    }
}

impl ProviderClient {
    /// Loads the fixture (replay, or record when the file exists).
    pub fn new(config: ProviderConfig, transport: Box<dyn Transport>) -> Result<Self, ProviderError> {
        config.validate()?;
        let fixture = match (&config.mode, &config.fixture_path) {
            (ProviderMode::Replay, Some(p)) => Fixture::load(p)?,
            (ProviderMode::Record, Some(p)) if p.exists() => Fixture::load(p)?,
            _ => Fixture::new(),
        };
        Ok(Self::with_fixture(config, transport, fixture))
    }

    pub fn with_fixture(config: ProviderConfig, transport: Box<dyn Transport>, fixture: Fixture) -> Self {
        ProviderClient {
            config,
            transport,
            fixture: Mutex::new(fixture),
            dirty: Mutex::new(false),
            embed_dim: Mutex::new(None),
            warnings: Mutex::new(Vec::new()),
        }
    }

    /// Replay client that can never reach a network.
    pub fn replay(fixture: Fixture) -> Self {
        Self::with_fixture(ProviderConfig::replay("<memory>"), Box::new(NoNetwork::new()), fixture)
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn fixture(&self) -> Fixture {
        self.fixture.lock().unwrap().clone()
    }

    pub fn take_warnings(&self) -> Vec<String> {
        std::mem::take(&mut self.warnings.lock().unwrap())
    }

    fn warn(&self, msg: String) {
        log::warn!("{msg}");
        self.warnings.lock().unwrap().push(msg);
    }

    /// Writes recorded entries back to `fixture_path` (record mode only).
    pub fn flush(&self) -> Result<(), ProviderError> {
        let mut dirty = self.dirty.lock().unwrap();
        if self.config.mode == ProviderMode::Record && *dirty {
            if let Some(p) = &self.config.fixture_path {
                self.fixture.lock().unwrap().save(p)?;
            }
            *dirty = false;
        }
        Ok(())
    }

    fn live(&self, request: &Value) -> Result<Vec<u8>, ProviderError> {
        let mut delay = self.config.backoff_ms;
        let mut tries = 0;
        loop {
            match self.transport.send(&self.config.endpoint, request, self.config.timeout()) {
                Err(e) if e.is_retryable() && tries < self.config.max_retries => {
                    tries += 1;
                    log::warn!("transport failure ({e}); retry {tries}/{}", self.config.max_retries);
                    std::thread::sleep(Duration::from_millis(delay));
                    delay = delay.saturating_mul(2);
                }
                other => return other,
            }
        }
    }

    /// Raw request/response exchange routed by mode.
    pub fn call(&self, op: &str, payload: Value, attempt: u32) -> Result<Vec<u8>, ProviderError> {
        let request = build_request(op, &self.config.model_name, payload, attempt);
        let digest = request_digest(&request);
        if let Some(hit) = self.fixture.lock().unwrap().get(&digest) {
            if self.config.mode != ProviderMode::Live {
                return Ok(hit.response.clone().into_bytes());
            }
        }
        match self.config.mode {
            ProviderMode::Replay => Err(ProviderError::FixtureMiss { op: op.into(), digest }),
            ProviderMode::Live => self.live(&request),
            ProviderMode::Record => {
                let bytes = self.live(&request)?;
                let text = String::from_utf8(bytes.clone()).map_err(|e| ProviderError::Parse {
                    offset: e.utf8_error().valid_up_to(),
                    message: "response is not UTF-8".into(),
                })?;
                self.fixture.lock().unwrap().insert(request, text)?;
                *self.dirty.lock().unwrap() = true;
                Ok(bytes)
            }
        }
    }

    fn call_json<T: serde::de::DeserializeOwned>(&self, op: &str, payload: Value, attempt: u32) -> Result<T, ProviderError> {
        let bytes = self.call(op, payload, attempt)?;
        serde_json::from_slice(&bytes).map_err(|e| ProviderError::parse(&bytes, e))
    }
}

pub trait Embedder: Sync {
    fn embed_text(&self, text: &str, subspace: Dimension) -> Result<EmbeddingVector, ProviderError>;
}

pub trait CitationClassifier: Sync {
    fn classify_citation(&self, request: &CitationRequest, attempt: u32) -> Result<ClassifierResponse, ProviderError>;
}

pub trait GraphExtractor: Sync {
    fn extract_reasoning_graph(&self, idea_text: &str, attempt: u32) -> Result<GraphPayload, ProviderError>;
}

pub trait Decomposer: Sync {
    fn extract_decomposition(&self, abstract_text: &str, attempt: u32) -> Result<Decomposition, ProviderError>;
}

#[derive(Debug, Deserialize)]
struct EmbeddingResponse {
    vector: Vec<f64>,
}

impl Embedder for ProviderClient {
    fn embed_text(&self, text: &str, subspace: Dimension) -> Result<EmbeddingVector, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::InvalidInput("text to embed is empty".into()));
        }
        let resp: EmbeddingResponse = self.call_json(OP_EMBED, json!({ "text": text, "subspace": subspace }), 0)?;
        let v = EmbeddingVector::new(resp.vector).map_err(|e| ProviderError::Schema(e.to_string()))?;
        if v.dim() == 0 {
            return Err(ProviderError::Schema("empty embedding".into()));
        }
        let mut dim = self.embed_dim.lock().unwrap();
        match *dim {
            Some(d) if d != v.dim() => return Err(ProviderError::DimensionDrift { expected: d, found: v.dim() }),
            None => *dim = Some(v.dim()),
            _ => {}
        }
        Ok(v)
    }
}

/// Both papers of a candidate pair as sent to the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationRequest {
    pub citing_title: String,
    pub citing_rq: String,
    pub citing_method: String,
    pub citing_findings: String,
    pub cited_title: String,
    pub cited_rq: String,
    pub cited_method: String,
    pub cited_findings: String,
}

/// Confidence that a citation reflects shared problem, method or findings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionScores {
    pub research_problem: f64,
    pub method_approach: f64,
    pub key_findings: f64,
    pub reasoning: String,
}

impl FunctionScores {
    pub fn new(research_problem: f64, method_approach: f64, key_findings: f64) -> Self {
        FunctionScores { research_problem, method_approach, key_findings, reasoning: String::new() }
    }

    pub fn get(&self, dim: Dimension) -> f64 {
        match dim {
            Dimension::Problem => self.research_problem,
            Dimension::Method => self.method_approach,
            Dimension::Findings => self.key_findings,
        }
    }

    /// Schema check plus warnings for scores off the 0.2 grid.
    pub fn check(&self) -> Result<Vec<String>, ProviderError> {
        let mut warnings = Vec::new();
        for (name, s) in [
            ("research_problem_score", self.research_problem),
            ("method_approach_score", self.method_approach),
            ("key_findings_score", self.key_findings),
        ] {
            if !s.is_finite() || !(0.0..=1.0).contains(&s) {
                return Err(ProviderError::Schema(format!("{name} = {s} is outside [0, 1]")));
            }
            if ((s * 5.0).round() - s * 5.0).abs() > 1e-9 {
                warnings.push(format!("{name} = {s} is off the 0.2 grid"));
            }
        }
        Ok(warnings)
    }
}

/// Classifier wire payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierResponse {
    pub research_problem_score: f64,
    pub method_approach_score: f64,
    pub key_findings_score: f64,
    pub reasoning: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub research_problem_analysis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method_approach_analysis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_findings_analysis: Option<String>,
}

impl ClassifierResponse {
    pub fn scores(&self) -> FunctionScores {
        FunctionScores {
            research_problem: self.research_problem_score,
            method_approach: self.method_approach_score,
            key_findings: self.key_findings_score,
            reasoning: self.reasoning.clone(),
        }
    }
}

impl CitationClassifier for ProviderClient {
    fn classify_citation(&self, request: &CitationRequest, attempt: u32) -> Result<ClassifierResponse, ProviderError> {
        let payload = serde_json::to_value(request).expect("request serializes");
        let resp: ClassifierResponse = self.call_json(OP_CLASSIFY, payload, attempt)?;
        for w in resp.scores().check()? {
            self.warn(w);
        }
        Ok(resp)
    }
}

/// Validated scores plus any grid warnings, with one schema re-request.
pub fn classify_citation(client: &dyn CitationClassifier, request: &CitationRequest) -> Result<(FunctionScores, Vec<String>), ProviderError> {
    with_schema_retry(|attempt| {
        let scores = client.classify_citation(request, attempt)?.scores();
        let warnings = scores.check()?;
        Ok((scores, warnings))
    })
}

impl GraphExtractor for ProviderClient {
    fn extract_reasoning_graph(&self, idea_text: &str, attempt: u32) -> Result<GraphPayload, ProviderError> {
        if idea_text.trim().is_empty() {
            return Err(ProviderError::InvalidInput("idea text is empty".into()));
        }
        self.call_json(OP_GRAPH, json!({ "idea": idea_text }), attempt)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub problem_text: String,
    pub method_text: String,
    pub findings_text: String,
}

impl Decomposition {
    pub fn get(&self, dim: Dimension) -> &str {
        match dim {
            Dimension::Problem => &self.problem_text,
            Dimension::Method => &self.method_text,
            Dimension::Findings => &self.findings_text,
        }
    }
}

#[derive(Debug, Deserialize)]
struct DecompositionResponse {
    text: String,
}

/// Parses an enumerated three-sentence summary (`1. ... 2. ... 3. ...`).
/// Leading bold labels such as `**Method/Approach**:` are stripped.
pub fn parse_decomposition(text: &str) -> Result<Decomposition, ProviderError> {
    static ITEM: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    static LABEL: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    let item = ITEM.get_or_init(|| Regex::new(r"(?m)^\s*([1-9])[.)]\s+(.+?)\s*$").unwrap());
    let label = LABEL.get_or_init(|| Regex::new(r"^\*{0,2}[A-Za-z /]+\*{0,2}\s*:\s*\**\s*").unwrap());
    let mut parts: Vec<(usize, String)> = Vec::new();
    for cap in item.captures_iter(text) {
        let n: usize = cap[1].parse().unwrap();
        let body = label.replace(&cap[2], "").trim().to_string();
        parts.push((n, body));
    }
    let numbered: Vec<&String> = (1..=3).filter_map(|n| parts.iter().find(|(k, _)| *k == n).map(|(_, b)| b)).collect();
    if parts.len() != 3 || numbered.len() != 3 || numbered.iter().any(|s| s.is_empty()) {
        return Err(ProviderError::Schema(format!("expected exactly 3 numbered sentences, found {}", parts.len())));
    }
    Ok(Decomposition { problem_text: numbered[0].clone(), method_text: numbered[1].clone(), findings_text: numbered[2].clone() })
}

impl Decomposer for ProviderClient {
    fn extract_decomposition(&self, abstract_text: &str, attempt: u32) -> Result<Decomposition, ProviderError> {
        if abstract_text.trim().is_empty() {
            return Err(ProviderError::InvalidInput("abstract is empty".into()));
        }
        let resp: DecompositionResponse = self.call_json(OP_DECOMPOSE, json!({ "abstract": abstract_text }), attempt)?;
        parse_decomposition(&resp.text)
    }
}

pub fn extract_decomposition(client: &dyn Decomposer, abstract_text: &str) -> Result<Decomposition, ProviderError> {
    with_schema_retry(|attempt| client.extract_decomposition(abstract_text, attempt))
}

/// Builds the request that [`ProviderClient`] would send, for fixture
/// authoring.
pub fn fixture_request(op: &str, model: &str, payload: Value, attempt: u32) -> Value {
    build_request(op, model, payload, attempt)
}

pub fn embed_payload(text: &str, subspace: Dimension) -> Value {
    json!({ "text": text, "subspace": subspace })
}

pub fn graph_payload(idea_text: &str) -> Value {
    json!({ "idea": idea_text })
}

pub fn decomposition_payload(abstract_text: &str) -> Value {
    json!({ "abstract": abstract_text })
}
