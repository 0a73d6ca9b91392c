//! Chat-completion style endpoint contract, an HTTP client, scripted mocks and
//! the append-only transcript store.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::prompts::parse_verdicts;
use crate::error::{Error, Result};
use crate::protocol::{LLM_MAX_RETRIES, LLM_TEMPERATURE, LLM_TIMEOUT_SECS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// Request body; field order is fixed so serialization is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmEndpoint {
    /// Full URL that accepts the POST.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding a bearer token.
    pub auth_env: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub temperature: f64,
    /// First retry delay; doubles on every further retry.
    pub backoff_ms: u64,
}

impl Default for LlmEndpoint {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            model: String::new(),
            auth_env: None,
            timeout_secs: LLM_TIMEOUT_SECS,
            max_retries: LLM_MAX_RETRIES,
            temperature: LLM_TEMPERATURE,
            backoff_ms: 500,
        }
    }
}

impl LlmEndpoint {
    pub fn id(&self) -> String {
        format!("{}#{}", self.base_url, self.model)
    }
}

/// Anything that can answer a chat request.
pub trait LlmClient: Send + Sync {
    fn id(&self) -> String;

    fn model(&self) -> String;

    fn temperature(&self) -> f64 {
        LLM_TEMPERATURE
    }

    /// `answer_key` is the hidden scorer key. Real endpoints never see it; the
    /// scripted mocks use it to answer.
    fn complete(&self, request: &ChatRequest, answer_key: Option<&[bool]>) -> Result<String>;
}

pub struct HttpClient {
    endpoint: LlmEndpoint,
    agent: ureq::Agent,
    token: Option<String>,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient").field("endpoint", &self.endpoint).finish_non_exhaustive()
    }
}

impl HttpClient {
    /// Reads the auth variable now so a missing token fails before any work.
    pub fn new(endpoint: LlmEndpoint) -> Result<Self> {
        if endpoint.base_url.is_empty() {
            return Err(Error::Config("endpoint base_url is empty".into()));
        }
        let token = match &endpoint.auth_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| Error::Config(format!("auth environment variable `{var}` is not set")))?,
            ),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(endpoint.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { endpoint, agent, token })
    }

    fn attempt(&self, body: &str) -> std::result::Result<String, (Option<u16>, String, bool)> {
        let mut req = self.agent.post(&self.endpoint.base_url).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req.send(body).map_err(|e| (None, e.to_string(), true))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| (Some(status), e.to_string(), true))?;
        match status {
            200..=299 => Ok(text),
            500..=599 => Err((Some(status), format!("server error {status}"), true)),
            _ => Err((Some(status), format!("request rejected with {status}"), false)),
        }
    }
}

/// Reply text from `choices[0].message.content`, or a top-level `content`.
pub fn response_content(body: &str) -> Result<String> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| Error::Protocol(format!("response is not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .or_else(|| v.get("content"))
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Protocol("response has no message content".into()))
}

impl LlmClient for HttpClient {
    fn id(&self) -> String {
        self.endpoint.id()
    }

    fn model(&self) -> String {
        self.endpoint.model.clone()
    }

    fn temperature(&self) -> f64 {
        self.endpoint.temperature
    }

    fn complete(&self, request: &ChatRequest, _answer_key: Option<&[bool]>) -> Result<String> {
        let body = serde_json::to_string(request)?;
        let mut last = (None, String::new());
        for attempt in 0..=self.endpoint.max_retries {
            if attempt > 0 {
                let delay = self.endpoint.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body) {
                Ok(text) => return response_content(&text),
                Err((status, message, retry)) => {
                    tracing::warn!(attempt, ?status, "endpoint call failed: {message}");
                    last = (status, message);
                    if !retry {
                        break;
                    }
                }
            }
        }
        Err(Error::Endpoint {
            status: last.0,
            message: last.1,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MockMode {
    /// Scorer answers the hidden key.
    GroundTruth,
    AllPositive,
    AllNegative,
    /// Returns the last user message unchanged.
    Echo,
}

impl std::str::FromStr for MockMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ground-truth" => Ok(Self::GroundTruth),
            "all-positive" => Ok(Self::AllPositive),
            "all-negative" => Ok(Self::AllNegative),
            "echo" => Ok(Self::Echo),
            other => Err(Error::Config(format!(
                "unknown mock mode `{other}` (expected ground-truth, all-positive, all-negative or echo)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MockClient {
    pub mode: MockMode,
}

pub const MOCK_HYPOTHESIS: &str = "Tokens that share the expert's trigger pattern.";

fn verdict_reply(verdicts: impl Iterator<Item = bool>) -> String {
    let list: Vec<&str> = verdicts.map(|v| if v { "1" } else { "0" }).collect();
    format!("Each example was checked against the hypothesis.\n[{}]", list.join(", "))
}

impl LlmClient for MockClient {
    fn id(&self) -> String {
        format!("mock:{}", serde_json::to_value(self.mode).expect("enum").as_str().unwrap_or(""))
    }

    fn model(&self) -> String {
        "mock".into()
    }

    fn complete(&self, request: &ChatRequest, answer_key: Option<&[bool]>) -> Result<String> {
        let last_user = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.clone())
            .unwrap_or_default();
        if self.mode == MockMode::Echo {
            return Ok(last_user);
        }
        Ok(match answer_key {
            None => format!("<hypothesis>{MOCK_HYPOTHESIS}</hypothesis>"),
            Some(key) => match self.mode {
                MockMode::GroundTruth => verdict_reply(key.iter().copied()),
                MockMode::AllPositive => verdict_reply(key.iter().map(|_| true)),
                _ => verdict_reply(key.iter().map(|_| false)),
            },
        })
    }
}

pub fn unix_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Explainer,
    Scorer,
    ScorerRetry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub layer: usize,
    pub expert: usize,
    pub stage: Stage,
    pub endpoint: String,
    pub request: ChatRequest,
    pub response: Option<String>,
    pub error: Option<String>,
    /// Scorer stages only.
    pub answer_key: Option<Vec<bool>>,
    pub started_ms: u64,
    pub finished_ms: u64,
}

/// Append-only JSON-lines transcript, safe for concurrent writers.
#[derive(Debug)]
pub struct TranscriptStore {
    path: Option<PathBuf>,
    file: Mutex<Option<File>>,
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl TranscriptStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            file: Mutex::new(None),
            entries: Mutex::new(Vec::new()),
        }
    }

    pub fn append_to(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            file: Mutex::new(Some(file)),
            entries: Mutex::new(Vec::new()),
        })
    }

    pub fn record(&self, entry: TranscriptEntry) -> Result<()> {
        let line = serde_json::to_string(&entry)? + "\n";
        {
            let mut file = self.file.lock().expect("transcript lock");
            if let (Some(f), Some(p)) = (file.as_mut(), &self.path) {
                f.write_all(line.as_bytes()).map_err(|e| Error::io(p, e))?;
            }
        }
        self.entries.lock().expect("transcript lock").push(entry);
        Ok(())
    }

    /// Entries recorded through this handle.
    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("transcript lock").clone()
    }

    pub fn read(path: &Path) -> Result<Vec<TranscriptEntry>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse(format!("{} line {}: {e}", path.display(), i + 1)))
            })
            .collect()
    }
}

/// Verdicts recovered from the last scorer reply of an expert in a transcript.
pub fn replay_verdicts(entries: &[TranscriptEntry], layer: usize, expert: usize) -> Option<(Vec<bool>, Vec<bool>)> {
    entries
        .iter()
        .filter(|e| e.layer == layer && e.expert == expert && e.stage != Stage::Explainer)
        .filter_map(|e| {
            let key = e.answer_key.clone()?;
            let verdicts = parse_verdicts(e.response.as_deref()?, key.len()).ok()?;
            Some((verdicts, key))
        })
        .last()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_serialization_is_stable() {
        let r = ChatRequest {
            model: "m".into(),
            messages: vec![Message::system("s"), Message::user("u")],
            temperature: 0.0,
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"model":"m","messages":[{"role":"system","content":"s"},{"role":"user","content":"u"}],"temperature":0.0}"#
        );
    }

    #[test]
    fn response_shapes() {
        assert_eq!(response_content(r#"{"choices":[{"message":{"content":"hi"}}]}"#).unwrap(), "hi");
        assert_eq!(response_content(r#"{"content":"yo"}"#).unwrap(), "yo");
        assert!(matches!(response_content("{}"), Err(Error::Protocol(_))));
        assert!(matches!(response_content("<html>"), Err(Error::Protocol(_))));
    }

    #[test]
    fn missing_auth_variable_is_a_config_error() {
        let e = LlmEndpoint {
            base_url: "http://127.0.0.1:9".into(),
            auth_env: Some("EXPERTSCOPE_TEST_SURELY_UNSET".into()),
            ..Default::default()
        };
        assert!(matches!(HttpClient::new(e), Err(Error::Config(_))));
    }

    #[test]
    fn echo_mock_and_transcript_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let store = TranscriptStore::append_to(&path).unwrap();
        let client = MockClient { mode: MockMode::Echo };
        let req = ChatRequest {
            model: client.model(),
            messages: vec![Message::user("ping")],
            temperature: 0.0,
        };
        let reply = client.complete(&req, None).unwrap();
        assert_eq!(reply, "ping");
        let entry = TranscriptEntry {
            layer: 0,
            expert: 1,
            stage: Stage::Explainer,
            endpoint: client.id(),
            request: req,
            response: Some(reply),
            error: None,
            answer_key: None,
            started_ms: 1,
            finished_ms: 2,
        };
        store.record(entry.clone()).unwrap();
        assert_eq!(TranscriptStore::read(&path).unwrap(), vec![entry]);
    }
}
