//! Next-edit prediction behind one trait, with three implementations:
//!
//! * `EndpointPredictor` — HTTP client for a generic completion endpoint,
//!   with retries, timeout and a bounded in-flight gate.
//! * `ReplayPredictor` — canned responses keyed by case id, case id + step,
//!   or prompt hash; makes harness runs fully deterministic.
//! * `EchoPredictor` — deterministically reproduces context poisoning: it
//!   returns the marked region with the highest-priority payload found in
//!   the context sections inserted at the cursor (history > views >
//!   dependencies).

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assemble::{AssembledPrompt, SectionKind, USER_CURSOR_MARKER};

pub const DEFAULT_API_KEY_ENV: &str = "NES_FORGE_API_KEY";
pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;
pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_MAX_INFLIGHT: usize = 4;
pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionSource {
    Endpoint,
    Replay,
    Echo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub raw_text: String,
    pub latency_ms: u64,
    pub source: PredictionSource,
}

/// Distinct error kinds so the harness can record `error` verdicts instead
/// of silently skipping.
#[derive(Debug, Error)]
pub enum PredictError {
    #[error("request timed out after {0} ms")]
    Timeout(u64),
    #[error("endpoint returned HTTP {0}")]
    Http(u16),
    #[error("network error: {0}")]
    Network(String),
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("no replay entry for any of: {0}")]
    MissingReplayKey(String),
    #[error("predictor configuration error: {0}")]
    Config(String),
}

/// Identifies the run so replay files can key responses.
#[derive(Debug, Clone, Default)]
pub struct PredictContext {
    pub case_id: Option<String>,
    pub step: usize,
}

pub trait Predictor: Send + Sync {
    fn predict(&self, prompt: &AssembledPrompt, ctx: &PredictContext)
        -> Result<Prediction, PredictError>;

    fn name(&self) -> &'static str;
}

// ---------------------------------------------------------------------------
// Echo

/// See the module docs: the echo double makes poisoning propagation
/// deterministic by construction. Output always keeps all three markers so
/// the full parser path is exercised.
#[derive(Debug, Default, Clone)]
pub struct EchoPredictor;

impl EchoPredictor {
    /// First changed line of the most recent hunk in the edit-history block.
    fn history_payload(section: &str) -> Option<String> {
        for line in section.lines() {
            if line.starts_with("```") || line.starts_with("@@") {
                continue;
            }
            if let Some(content) = line.strip_prefix('+').or_else(|| line.strip_prefix('-')) {
                if !content.trim().is_empty() {
                    return Some(content.to_string());
                }
            }
        }
        None
    }

    /// First content line of the top-ranked snippet.
    fn views_payload(section: &str) -> Option<String> {
        for line in section.lines() {
            if line.starts_with("file_path: ") {
                continue;
            }
            if !line.trim().is_empty() {
                return Some(line.to_string());
            }
        }
        None
    }

    /// First dependency signature carrying a string literal.
    fn deps_payload(section: &str) -> Option<String> {
        section
            .lines()
            .find(|line| line.contains('"'))
            .map(str::to_string)
    }

    fn payload(prompt: &AssembledPrompt) -> Option<String> {
        if let Some(section) = prompt.section(SectionKind::EditHistory) {
            if let Some(p) = Self::history_payload(section) {
                return Some(p);
            }
        }
        if let Some(section) = prompt.section(SectionKind::RecentlyViewedCode) {
            if let Some(p) = Self::views_payload(section) {
                return Some(p);
            }
        }
        if let Some(section) = prompt.section(SectionKind::CrossFileDependencies) {
            if let Some(p) = Self::deps_payload(section) {
                return Some(p);
            }
        }
        None
    }

    fn marked_region(prompt: &AssembledPrompt) -> Option<String> {
        let section = prompt.section(SectionKind::StructuralContext)?;
        // Drop the fence lines around the marked text.
        let mut lines: Vec<&str> = section.lines().collect();
        if lines.first().map(|l| l.starts_with("```")).unwrap_or(false) {
            lines.remove(0);
        }
        if lines.last().map(|l| l.trim() == "```").unwrap_or(false) {
            lines.pop();
        }
        Some(lines.join("\n"))
    }
}

impl Predictor for EchoPredictor {
    fn predict(
        &self,
        prompt: &AssembledPrompt,
        _ctx: &PredictContext,
    ) -> Result<Prediction, PredictError> {
        let region = Self::marked_region(prompt).ok_or_else(|| {
            PredictError::MalformedResponse("prompt has no structural context section".into())
        })?;
        let raw_text = match Self::payload(prompt) {
            Some(payload) => region.replace(
                USER_CURSOR_MARKER,
                &format!("{USER_CURSOR_MARKER}\n{payload}"),
            ),
            None => region,
        };
        Ok(Prediction {
            raw_text,
            latency_ms: 0,
            source: PredictionSource::Echo,
        })
    }

    fn name(&self) -> &'static str {
        "echo"
    }
}

// ---------------------------------------------------------------------------
// Replay

/// Lookup order: `<case>#<step>`, `<case>`, `sha256:<prompt digest>`.
#[derive(Debug, Clone, Default)]
pub struct ReplayPredictor {
    map: HashMap<String, String>,
}

impl ReplayPredictor {
    pub fn from_map(map: HashMap<String, String>) -> Self {
        ReplayPredictor { map }
    }

    pub fn from_file(path: &Path) -> Result<Self, PredictError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| PredictError::Config(format!("cannot read replay file {path:?}: {e}")))?;
        let map: HashMap<String, String> = serde_json::from_str(&raw)
            .map_err(|e| PredictError::Config(format!("replay file {path:?} is not a JSON string map: {e}")))?;
        Ok(ReplayPredictor { map })
    }
}

impl Predictor for ReplayPredictor {
    fn predict(
        &self,
        prompt: &AssembledPrompt,
        ctx: &PredictContext,
    ) -> Result<Prediction, PredictError> {
        let mut keys = Vec::new();
        if let Some(case) = &ctx.case_id {
            keys.push(format!("{case}#{}", ctx.step));
            keys.push(case.clone());
        }
        keys.push(format!("sha256:{}", prompt.sha256()));
        for key in &keys {
            if let Some(text) = self.map.get(key) {
                return Ok(Prediction {
                    raw_text: text.clone(),
                    latency_ms: 0,
                    source: PredictionSource::Replay,
                });
            }
        }
        Err(PredictError::MissingReplayKey(keys.join(", ")))
    }

    fn name(&self) -> &'static str {
        "replay"
    }
}

// ---------------------------------------------------------------------------
// Endpoint

/// Wire configuration for the generic completion protocol:
/// `POST {url}` with body `{"prompt": ..., "max_tokens": N}` and response
/// `{"text": ...}`. Both sides are remappable: the body via a template with
/// `{{prompt}}` / `{{max_tokens}}` placeholders, the response via a dot path.
#[derive(Clone, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub endpoint_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_inflight: usize,
    pub max_tokens: u32,
    pub request_template: Option<String>,
    pub response_text_path: String,
}

impl PredictorConfig {
    pub fn new(endpoint_url: impl Into<String>) -> Self {
        PredictorConfig {
            endpoint_url: endpoint_url.into(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_retries: DEFAULT_MAX_RETRIES,
            max_inflight: DEFAULT_MAX_INFLIGHT,
            max_tokens: DEFAULT_MAX_TOKENS,
            request_template: None,
            response_text_path: "text".to_string(),
        }
    }
}

// The config never carries the key itself, but keep its Debug output free of
// anything secret-shaped anyway.
impl std::fmt::Debug for PredictorConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PredictorConfig")
            .field("endpoint_url", &self.endpoint_url)
            .field("api_key_env", &self.api_key_env)
            .field("timeout_ms", &self.timeout_ms)
            .field("max_retries", &self.max_retries)
            .field("max_inflight", &self.max_inflight)
            .field("max_tokens", &self.max_tokens)
            .field("response_text_path", &self.response_text_path)
            .finish_non_exhaustive()
    }
}

/// Counting gate bounding concurrent requests.
struct Gate {
    slots: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(slots: usize) -> Self {
        Gate {
            slots: Mutex::new(slots.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut slots = self.slots.lock().unwrap();
        while *slots == 0 {
            slots = self.cv.wait(slots).unwrap();
        }
        *slots -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'g> {
    gate: &'g Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut slots = self.gate.slots.lock().unwrap();
        *slots += 1;
        self.gate.cv.notify_one();
    }
}

pub struct EndpointPredictor {
    config: PredictorConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl std::fmt::Debug for EndpointPredictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EndpointPredictor")
            .field("config", &self.config)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl EndpointPredictor {
    /// Reads the API key from the configured environment variable; the key
    /// never leaves this struct except as an Authorization header.
    pub fn new(config: PredictorConfig) -> Result<Self, PredictError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            PredictError::Config(format!(
                "environment variable {} is not set (required for the endpoint predictor)",
                config.api_key_env
            ))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| PredictError::Config(e.to_string()))?;
        Ok(EndpointPredictor {
            gate: Gate::new(config.max_inflight),
            config,
            api_key,
            client,
        })
    }

    fn request_body(&self, prompt: &str) -> Result<serde_json::Value, PredictError> {
        match &self.config.request_template {
            None => Ok(serde_json::json!({
                "prompt": prompt,
                "max_tokens": self.config.max_tokens,
            })),
            Some(template) => {
                let body = template
                    .replace(
                        "{{prompt}}",
                        serde_json::to_string(prompt)
                            .expect("string serializes")
                            .trim_matches('"'),
                    )
                    .replace("{{max_tokens}}", &self.config.max_tokens.to_string());
                serde_json::from_str(&body).map_err(|e| {
                    PredictError::Config(format!("request template renders invalid JSON: {e}"))
                })
            }
        }
    }

    fn extract_text(&self, value: &serde_json::Value) -> Result<String, PredictError> {
        let mut cur = value;
        for part in self.config.response_text_path.split('.') {
            cur = match cur {
                serde_json::Value::Object(map) => map.get(part).ok_or_else(|| {
                    PredictError::MalformedResponse(format!("missing field {part:?} in response"))
                })?,
                serde_json::Value::Array(items) => {
                    let idx: usize = part.parse().map_err(|_| {
                        PredictError::MalformedResponse(format!(
                            "path component {part:?} is not an array index"
                        ))
                    })?;
                    items.get(idx).ok_or_else(|| {
                        PredictError::MalformedResponse(format!("index {idx} out of bounds"))
                    })?
                }
                _ => {
                    return Err(PredictError::MalformedResponse(format!(
                        "cannot descend into {part:?}"
                    )))
                }
            };
        }
        cur.as_str()
            .map(str::to_string)
            .ok_or_else(|| PredictError::MalformedResponse("text field is not a string".into()))
    }
}

impl Predictor for EndpointPredictor {
    fn predict(
        &self,
        prompt: &AssembledPrompt,
        _ctx: &PredictContext,
    ) -> Result<Prediction, PredictError> {
        let _slot = self.gate.acquire();
        let body = self.request_body(prompt.rendered())?;
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            let result = self
                .client
                .post(&self.config.endpoint_url)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send();
            match result {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let value: serde_json::Value = response
                            .json()
                            .map_err(|e| PredictError::MalformedResponse(e.to_string()))?;
                        let text = self.extract_text(&value)?;
                        return Ok(Prediction {
                            raw_text: text,
                            latency_ms: started.elapsed().as_millis() as u64,
                            source: PredictionSource::Endpoint,
                        });
                    }
                    if status.is_server_error() && attempt < self.config.max_retries {
                        attempt += 1;
                        std::thread::sleep(backoff(attempt));
                        continue;
                    }
                    return Err(PredictError::Http(status.as_u16()));
                }
                Err(err) => {
                    if err.is_timeout() {
                        if attempt < self.config.max_retries {
                            attempt += 1;
                            std::thread::sleep(backoff(attempt));
                            continue;
                        }
                        return Err(PredictError::Timeout(self.config.timeout_ms));
                    }
                    if attempt < self.config.max_retries {
                        attempt += 1;
                        std::thread::sleep(backoff(attempt));
                        continue;
                    }
                    return Err(PredictError::Network(err.to_string()));
                }
            }
        }
    }

    fn name(&self) -> &'static str {
        "endpoint"
    }
}

fn backoff(attempt: u32) -> Duration {
    Duration::from_millis(100u64.saturating_mul(1 << attempt.min(6)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    #[test]
    fn replay_lookup_order() {
        let mut map = HashMap::new();
        map.insert("v2-001#0".to_string(), "step zero".to_string());
        map.insert("v2-001".to_string(), "case level".to_string());
        let predictor = ReplayPredictor::from_map(map);
        let prompt = dummy_prompt();
        let p0 = predictor
            .predict(&prompt, &PredictContext { case_id: Some("v2-001".into()), step: 0 })
            .unwrap();
        assert_eq!(p0.raw_text, "step zero");
        let p1 = predictor
            .predict(&prompt, &PredictContext { case_id: Some("v2-001".into()), step: 3 })
            .unwrap();
        assert_eq!(p1.raw_text, "case level");
        let err = predictor
            .predict(&prompt, &PredictContext { case_id: Some("nope".into()), step: 0 })
            .unwrap_err();
        assert!(matches!(err, PredictError::MissingReplayKey(_)));
    }

    fn dummy_prompt() -> AssembledPrompt {
        use crate::assemble::*;
        use crate::doc::{Document, Position};
        use crate::syntax::parse;
        let doc = Document::new("A.java", "class A {}\n".to_string());
        let tree = parse(&doc).unwrap();
        let structural =
            extract_structural_context(&doc, &tree, Position::new(0, 9), 2048).unwrap();
        assemble_prompt(
            PromptInputs {
                instruction: DEFAULT_INSTRUCTION.into(),
                views: vec![],
                history_newest_first: vec![],
                structural,
                dependencies: vec![],
                outline: vec![],
                diagnostics: vec![],
            },
            &PromptBudgets::default(),
        )
        .unwrap()
    }

    #[test]
    fn echo_without_payload_echoes_region() {
        let prompt = dummy_prompt();
        let out = EchoPredictor.predict(&prompt, &PredictContext::default()).unwrap();
        assert!(out.raw_text.contains(USER_CURSOR_MARKER));
        let region = crate::suggestion::extract_region(&out).unwrap();
        assert_eq!(region, "class A {}");
    }

    #[test]
    fn endpoint_round_trip_against_local_server() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = [0u8; 8192];
            let _ = stream.read(&mut buf);
            let body = r#"{"text":"<|editable_region_start|>\nok\n<|editable_region_end|>"}"#;
            let response = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(response.as_bytes()).unwrap();
        });

        std::env::set_var("NES_FORGE_TEST_KEY", "sk-unit-test-000");
        let mut config = PredictorConfig::new(format!("http://{addr}/predict"));
        config.api_key_env = "NES_FORGE_TEST_KEY".to_string();
        config.max_retries = 0;
        let predictor = EndpointPredictor::new(config).unwrap();
        let out = predictor.predict(&dummy_prompt(), &PredictContext::default()).unwrap();
        assert!(out.raw_text.contains("ok"));
        handle.join().unwrap();
    }

    #[test]
    fn endpoint_requires_key_env() {
        std::env::remove_var("NES_FORGE_MISSING_KEY");
        let mut config = PredictorConfig::new("http://127.0.0.1:1/x");
        config.api_key_env = "NES_FORGE_MISSING_KEY".to_string();
        let err = EndpointPredictor::new(config).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("NES_FORGE_MISSING_KEY"));
    }

    #[test]
    fn malformed_response_is_distinct_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = [0u8; 8192];
            let _ = stream.read(&mut buf);
            let body = r#"{"unexpected": 1}"#;
            let response = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(response.as_bytes()).unwrap();
        });
        std::env::set_var("NES_FORGE_TEST_KEY2", "sk-unit-test-001");
        let mut config = PredictorConfig::new(format!("http://{addr}/predict"));
        config.api_key_env = "NES_FORGE_TEST_KEY2".to_string();
        config.max_retries = 0;
        let predictor = EndpointPredictor::new(config).unwrap();
        let err = predictor.predict(&dummy_prompt(), &PredictContext::default()).unwrap_err();
        assert!(matches!(err, PredictError::MalformedResponse(_)));
        handle.join().unwrap();
    }

    #[test]
    fn debug_output_redacts_key() {
        std::env::set_var("NES_FORGE_TEST_KEY3", "sk-very-secret-12345");
        let mut config = PredictorConfig::new("http://127.0.0.1:1/x");
        config.api_key_env = "NES_FORGE_TEST_KEY3".to_string();
        let predictor = EndpointPredictor::new(config).unwrap();
        let debug = format!("{predictor:?}");
        assert!(!debug.contains("sk-very-secret-12345"));
        assert!(debug.contains("<redacted>"));
    }
}
