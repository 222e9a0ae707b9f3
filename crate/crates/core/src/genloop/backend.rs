//! Language model backends: an OpenAI-style chat completion client, a scripted
//! replay mock, and a recorder that captures responses for later replay.

use std::collections::VecDeque;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::GenerationConfig;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response shape: {0}")]
    Decode(String),
    #[error("scripted mock has no responses left")]
    ScriptExhausted,
    #[error("scripted failure: {0}")]
    Scripted(String),
    #[error("script file {path}: {message}")]
    Script { path: String, message: String },
}

/// Anything that turns a prompt into a completion.
///
/// Implementations must tolerate concurrent calls from different generation runs.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str, cfg: &GenerationConfig) -> Result<String, BackendError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for &B {
    fn complete(&self, prompt: &str, cfg: &GenerationConfig) -> Result<String, BackendError> {
        (**self).complete(prompt, cfg)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn complete(&self, prompt: &str, cfg: &GenerationConfig) -> Result<String, BackendError> {
        (**self).complete(prompt, cfg)
    }
}

/// One line of a mock script: `{"response": "..."}` or `{"error": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptEntry {
    Response(String),
    Error(String),
}

/// Replays a fixed sequence of responses in order.
#[derive(Debug, Default)]
pub struct ScriptedMock {
    script: Mutex<VecDeque<ScriptEntry>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedMock {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        ScriptedMock {
            script: Mutex::new(entries.into_iter().collect()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn from_responses<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        ScriptedMock::new(responses.into_iter().map(|r| ScriptEntry::Response(r.into())))
    }

    /// Reads a JSONL script file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let script_err = |message: String| BackendError::Script {
            path: path.display().to_string(),
            message,
        };
        let file = fs::File::open(path).map_err(|e| script_err(e.to_string()))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| script_err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(&line)
                .map_err(|e| script_err(format!("line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        Ok(ScriptedMock::new(entries))
    }

    /// Prompts received so far, in call order.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("mock lock").clone()
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().expect("mock lock").len()
    }
}

impl LlmBackend for ScriptedMock {
    fn complete(&self, prompt: &str, _cfg: &GenerationConfig) -> Result<String, BackendError> {
        let next = self.script.lock().expect("mock lock").pop_front();
        self.prompts.lock().expect("mock lock").push(prompt.to_string());
        match next {
            Some(ScriptEntry::Response(text)) => Ok(text),
            Some(ScriptEntry::Error(message)) => Err(BackendError::Scripted(message)),
            None => Err(BackendError::ScriptExhausted),
        }
    }
}

/// Forwards to `inner` and appends every successful response to a script file,
/// so a live run can later be replayed with [`ScriptedMock::from_file`].
pub struct RecordingBackend<B> {
    inner: B,
    sink: Mutex<fs::File>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn create(inner: B, path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(RecordingBackend {
            inner,
            sink: Mutex::new(fs::File::create(path)?),
        })
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn complete(&self, prompt: &str, cfg: &GenerationConfig) -> Result<String, BackendError> {
        let response = self.inner.complete(prompt, cfg)?;
        let line = serde_json::to_string(&ScriptEntry::Response(response.clone()))
            .expect("script entry serializes");
        let mut sink = self.sink.lock().expect("recorder lock");
        writeln!(sink, "{line}").map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(response)
    }
}

/// Settings for [`HttpBackend`].
#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Send `top_k` and `repetition_penalty`, which plain chat-completion
    /// servers may reject.
    pub sampling_extensions: bool,
    pub max_transport_retries: usize,
    pub retry_backoff: Duration,
}

impl HttpSettings {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpSettings {
            url: url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            sampling_extensions: true,
            max_transport_retries: 3,
            retry_backoff: Duration::from_millis(500),
        }
    }
}

/// Chat-completion client (`POST {model, messages, temperature, top_p, ...}`).
pub struct HttpBackend {
    settings: HttpSettings,
    agent: ureq::Agent,
    extensions_enabled: AtomicBool,
}

impl HttpBackend {
    pub fn new(settings: HttpSettings) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        if !settings.sampling_extensions {
            log::warn!("top_k and repetition_penalty will not be sent to {}", settings.url);
        }
        HttpBackend {
            extensions_enabled: AtomicBool::new(settings.sampling_extensions),
            settings,
            agent,
        }
    }

    /// Request body for `prompt`.
    pub fn request_body(&self, prompt: &str, cfg: &GenerationConfig, extensions: bool) -> Value {
        let mut body = json!({
            "model": self.settings.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
        });
        if extensions {
            body["top_k"] = json!(cfg.top_k);
            body["repetition_penalty"] = json!(cfg.repetition_penalty);
        }
        body
    }

    fn post_once(&self, body: &Value) -> Result<(u16, String), BackendError> {
        let mut request = self.agent.post(&self.settings.url);
        if let Some(key) = &self.settings.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok((status, text))
    }

    fn post_with_retries(&self, body: &Value) -> Result<(u16, String), BackendError> {
        let mut attempt = 0;
        loop {
            let result = self.post_once(body);
            let retryable = match &result {
                Err(BackendError::Transport(_)) => true,
                Ok((status, _)) => *status == 429 || *status >= 500,
                Err(_) => false,
            };
            if !retryable || attempt >= self.settings.max_transport_retries {
                return result;
            }
            let wait = self.settings.retry_backoff * 2u32.saturating_pow(attempt as u32);
            log::warn!("request to {} failed, retrying in {wait:?}", self.settings.url);
            std::thread::sleep(wait);
            attempt += 1;
        }
    }
}

/// Pulls `choices[0].message.content` out of a chat completion response.
pub fn extract_content(body: &str) -> Result<String, BackendError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| BackendError::Decode(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Decode("missing choices[0].message.content".into()))
}

impl LlmBackend for HttpBackend {
    fn complete(&self, prompt: &str, cfg: &GenerationConfig) -> Result<String, BackendError> {
        let extensions = self.extensions_enabled.load(Ordering::Relaxed);
        let (mut status, mut text) =
            self.post_with_retries(&self.request_body(prompt, cfg, extensions))?;
        if extensions && (status == 400 || status == 422) {
            log::warn!(
                "{} rejected the request with HTTP {status}; dropping top_k and repetition_penalty",
                self.settings.url
            );
            self.extensions_enabled.store(false, Ordering::Relaxed);
            (status, text) = self.post_with_retries(&self.request_body(prompt, cfg, false))?;
        }
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body: text });
        }
        extract_content(&text)
    }
}
