// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::Prompt;
use crate::model::Strategy;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("no scripted response at {0}")]
    MissingScript(PathBuf),
    #[error("provider failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("provider error: {0}")]
    Fatal(String),
}

/// Identifies one request for trace replay: the task plus a label such as
/// `2.3`, `2.3.cref`, or `replay.<job>.<case>.candidate`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PromptKey {
    pub task_id: String,
    pub label: String,
}

impl PromptKey {
    pub fn new(task_id: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            label: label.into(),
        }
    }
}

pub trait LlmProvider: Send + Sync {
    fn generate(&self, key: &PromptKey, prompt: &Prompt) -> Result<String, LlmError>;

    /// Same request with an explicit sampling temperature.
    fn generate_with_temperature(
        &self,
        key: &PromptKey,
        prompt: &Prompt,
        _temperature: f64,
    ) -> Result<String, LlmError> {
        self.generate(key, prompt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HttpChat,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Base URL of a chat-completions compatible server.
    pub endpoint: Option<String>,
    pub path: String,
    pub model: Option<String>,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    /// Scripted responses: `<dir>/<task>/<label>.response`.
    pub script_dir: Option<PathBuf>,
    pub temperature: f64,
    pub repair_temperature: f64,
    pub max_retries: u32,
    pub timeout_ms: u64,
    pub backoff_ms: u64,
    pub max_tokens: Option<u32>,
    pub max_in_flight: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Scripted,
            endpoint: None,
            path: "/chat/completions".into(),
            model: None,
            api_key_env: "RTLEVOLVE_API_KEY".into(),
            script_dir: None,
            temperature: 0.8,
            repair_temperature: 0.4,
            max_retries: 3,
            timeout_ms: 120_000,
            backoff_ms: 500,
            max_tokens: None,
            max_in_flight: 4,
        }
    }
}

impl ProviderConfig {
    pub fn scripted(dir: impl Into<PathBuf>) -> Self {
        Self {
            kind: ProviderKind::Scripted,
            script_dir: Some(dir.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.kind {
            ProviderKind::Scripted => {
                if self.script_dir.is_none() {
                    return Err(LlmError::Config("scripted provider needs script_dir".into()));
                }
                if self.endpoint.is_some() || self.model.is_some() {
                    return Err(LlmError::Config(
                        "scripted provider must not set endpoint or model".into(),
                    ));
                }
            }
            ProviderKind::HttpChat => {
                if self.endpoint.is_none() || self.model.is_none() {
                    return Err(LlmError::Config("http_chat provider needs endpoint and model".into()));
                }
                if self.script_dir.is_some() {
                    return Err(LlmError::Config("http_chat provider must not set script_dir".into()));
                }
            }
        }
        if self.max_in_flight == 0 {
            return Err(LlmError::Config("max_in_flight must be >= 1".into()));
        }
        Ok(())
    }

    pub fn temperature_for(&self, strategy: Strategy) -> f64 {
        match strategy {
            Strategy::Repair => self.repair_temperature,
            _ => self.temperature,
        }
    }

    /// Builds the configured provider; relative script directories resolve
    /// against `base`.
    pub fn build(&self, base: &Path) -> Result<Box<dyn LlmProvider>, LlmError> {
        self.validate()?;
        match self.kind {
            ProviderKind::Scripted => {
                let dir = self.script_dir.as_ref().expect("validated");
                Ok(Box::new(ScriptedProvider::new(base.join(dir))))
            }
            ProviderKind::HttpChat => {
                let api_key = std::env::var(&self.api_key_env).ok();
                let url = format!(
                    "{}{}",
                    self.endpoint.as_deref().expect("validated").trim_end_matches('/'),
                    self.path
                );
                let transport = ReqwestTransport::new(url, api_key, Duration::from_millis(self.timeout_ms))?;
                Ok(Box::new(HttpProvider::new(self.clone(), transport)))
            }
        }
    }
}

enum ScriptSource {
    Dir(PathBuf),
    Map(BTreeMap<PromptKey, Vec<String>>),
}

/// Replays stored responses. The n-th request for a key (n ≥ 2) reads
/// `<label>.<n>.response` when present, else the base `<label>.response`.
/// A `<label>.error` file makes the request fail.
pub struct ScriptedProvider {
    source: ScriptSource,
    calls: Mutex<HashMap<PromptKey, usize>>,
    log: Mutex<Vec<(PromptKey, Prompt)>>,
}

impl ScriptedProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self::with_source(ScriptSource::Dir(dir.into()))
    }

    /// In-memory script: each key serves its responses in order, repeating
    /// the last one.
    pub fn from_map(map: BTreeMap<PromptKey, Vec<String>>) -> Self {
        Self::with_source(ScriptSource::Map(map))
    }

    fn with_source(source: ScriptSource) -> Self {
        Self {
            source,
            calls: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Requests served so far, in order.
    pub fn requests(&self) -> Vec<(PromptKey, Prompt)> {
        self.log.lock().expect("log lock").clone()
    }
}

impl LlmProvider for ScriptedProvider {
    fn generate(&self, key: &PromptKey, prompt: &Prompt) -> Result<String, LlmError> {
        let n = {
            let mut calls = self.calls.lock().expect("calls lock");
            let c = calls.entry(key.clone()).or_insert(0);
            *c += 1;
            *c
        };
        self.log
            .lock()
            .expect("log lock")
            .push((key.clone(), prompt.clone()));
        match &self.source {
            ScriptSource::Map(map) => {
                let list = map
                    .get(key)
                    .filter(|l| !l.is_empty())
                    .ok_or_else(|| LlmError::MissingScript(PathBuf::from(format!("{}/{}", key.task_id, key.label))))?;
                Ok(list[(n - 1).min(list.len() - 1)].clone())
            }
            ScriptSource::Dir(dir) => {
                let task_dir = dir.join(&key.task_id);
                let err = task_dir.join(format!("{}.error", key.label));
                if err.is_file() {
                    let msg = std::fs::read_to_string(&err).unwrap_or_default();
                    return Err(LlmError::Fatal(format!("scripted failure: {}", msg.trim())));
                }
                let nth = task_dir.join(format!("{}.{n}.response", key.label));
                let base = task_dir.join(format!("{}.response", key.label));
                let path = if n > 1 && nth.is_file() { nth } else { base };
                std::fs::read_to_string(&path).map_err(|_| LlmError::MissingScript(path))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
    pub retryable: bool,
}

/// Sends one chat-completions request body and returns the first choice's
/// message content.
pub trait ChatTransport: Send + Sync {
    fn send(&self, body: &serde_json::Value) -> Result<String, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl ReqwestTransport {
    pub fn new(url: String, api_key: Option<String>, timeout: Duration) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self { client, url, api_key })
    }
}

impl ChatTransport for ReqwestTransport {
    fn send(&self, body: &serde_json::Value) -> Result<String, TransportError> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TransportError {
                message: format!("HTTP {status}"),
                retryable: status.as_u16() == 429 || status.is_server_error(),
            });
        }
        let value: serde_json::Value = resp.json().map_err(|e| TransportError {
            message: format!("decoding response: {e}"),
            retryable: false,
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError {
                message: "response has no choices[0].message.content".into(),
                retryable: false,
            })
    }
}

struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
}

/// Chat-completions provider with bounded concurrency and exponential
/// backoff on retryable transport errors.
pub struct HttpProvider<T: ChatTransport> {
    config: ProviderConfig,
    transport: T,
    in_flight: InFlight,
}

impl<T: ChatTransport> HttpProvider<T> {
    pub fn new(config: ProviderConfig, transport: T) -> Self {
        Self {
            config,
            transport,
            in_flight: InFlight {
                count: Mutex::new(0),
                freed: Condvar::new(),
            },
        }
    }

    fn body(&self, prompt: &Prompt, temperature: f64) -> serde_json::Value {
        let mut body = json!({
            "model": self.config.model.clone().unwrap_or_default(),
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ],
            "temperature": temperature,
        });
        if let Some(m) = self.config.max_tokens {
            body["max_tokens"] = json!(m);
        }
        body
    }

    fn request(&self, body: &serde_json::Value) -> Result<String, LlmError> {
        {
            let mut n = self.in_flight.count.lock().expect("in-flight lock");
            while *n >= self.config.max_in_flight {
                n = self.in_flight.freed.wait(n).expect("in-flight lock");
            }
            *n += 1;
        }
        let result = self.with_retries(body);
        *self.in_flight.count.lock().expect("in-flight lock") -= 1;
        self.in_flight.freed.notify_one();
        result
    }

    fn with_retries(&self, body: &serde_json::Value) -> Result<String, LlmError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.transport.send(body) {
                Ok(text) => return Ok(text),
                Err(e) if !e.retryable => return Err(LlmError::Fatal(e.message)),
                Err(e) if attempt > self.config.max_retries => {
                    return Err(LlmError::Exhausted {
                        attempts: attempt,
                        last: e.message,
                    })
                }
                Err(e) => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                    log::warn!("provider attempt {attempt} failed ({e}); retrying in {wait} ms");
                    std::thread::sleep(Duration::from_millis(wait));
                }
            }
        }
    }
}

impl<T: ChatTransport> LlmProvider for HttpProvider<T> {
    fn generate(&self, key: &PromptKey, prompt: &Prompt) -> Result<String, LlmError> {
        self.generate_with_temperature(key, prompt, self.config.temperature_for(prompt.strategy))
    }

    fn generate_with_temperature(
        &self,
        _key: &PromptKey,
        prompt: &Prompt,
        temperature: f64,
    ) -> Result<String, LlmError> {
        self.request(&self.body(prompt, temperature))
    }
}
