//! Oracle backend for OpenAI-compatible vision chat-completions endpoints.
//!
//! The API key is read from an environment variable and only ever leaves
//! the process in the `Authorization` header. Everything that can end up in
//! a log line or an error message goes through [`redact`] first.

use std::fmt;
use std::time::{Duration, Instant};

use base64::Engine;
use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use travnav_core::oracle::{parse_reply, Oracle, OracleQuery, OracleReply, ReplyDiagnostics};
use travnav_core::segmentation::encode_png;
use travnav_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// Delay before retry k (1-based) is `backoff_base_secs · backoff_factor^(k−1)`.
    pub backoff_base_secs: f64,
    pub backoff_factor: f64,
    pub max_tokens: Option<u32>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 30.0,
            max_retries: 3,
            backoff_base_secs: 1.0,
            backoff_factor: 2.0,
            max_tokens: Some(512),
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return bad("endpoint must be an http(s) URL");
        }
        if self.model.trim().is_empty() {
            return bad("model name is empty");
        }
        if self.api_key_env.trim().is_empty() {
            return bad("api_key_env is empty");
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return bad("timeout_secs must be positive");
        }
        if !(self.backoff_base_secs.is_finite() && self.backoff_base_secs >= 0.0) {
            return bad("backoff_base_secs must be non-negative");
        }
        if !(self.backoff_factor.is_finite() && self.backoff_factor >= 1.0) {
            return bad("backoff_factor must be at least 1");
        }
        Ok(())
    }

    /// Wait before retry `k` (1-based).
    pub fn backoff(&self, k: u32) -> Duration {
        let exp = k.saturating_sub(1).min(30) as i32;
        Duration::from_secs_f64(self.backoff_base_secs * self.backoff_factor.powi(exp))
    }
}

/// A secret that never prints.
#[derive(Clone)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Result<Self> {
        let key = key.into();
        if key.trim().is_empty() {
            return Err(Error::Validation("API key is empty".into()));
        }
        if key.chars().any(|c| c.is_control()) {
            return Err(Error::Validation("API key contains control characters".into()));
        }
        Ok(Self(key))
    }

    pub fn from_env(var: &str) -> Result<Self> {
        match std::env::var(var) {
            Ok(k) => Self::new(k),
            Err(_) => Err(Error::Validation(format!("environment variable {var} is not set"))),
        }
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

/// `text` with every occurrence of `secret` masked.
pub fn redact(text: &str, secret: &str) -> String {
    if secret.is_empty() {
        text.to_string()
    } else {
        text.replace(secret, "<redacted>")
    }
}

/// Chat-completions body: one user message with a text part and an image part.
pub fn request_body(config: &LlmConfig, prompt: &str, png: &[u8]) -> Value {
    let url = format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(png));
    let mut body = json!({
        "model": config.model,
        "temperature": 0,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": prompt},
                {"type": "image_url", "image_url": {"url": url}}
            ]
        }]
    });
    if let Some(m) = config.max_tokens {
        body["max_tokens"] = json!(m);
    }
    body
}

/// Assistant text of a chat-completions response. Content may be a plain
/// string or an array of text parts.
pub fn response_text(body: &str) -> std::result::Result<String, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        _ => Err("response has no choices[0].message.content".into()),
    }
}

pub struct LlmClient {
    config: LlmConfig,
    key: ApiKey,
    agent: ureq::Agent,
}

impl fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmClient").field("config", &self.config).field("key", &self.key).finish()
    }
}

/// Text of a successful completion and how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// Wall-clock seconds from the first attempt to the reply, retries included.
    pub latency: f64,
    pub attempts: u32,
}

impl LlmClient {
    /// Client whose key comes from `config.api_key_env`.
    pub fn new(config: LlmConfig) -> Result<Self> {
        config.validate()?;
        let key = ApiKey::from_env(&config.api_key_env)?;
        Self::with_key(config, key)
    }

    pub fn with_key(config: LlmConfig, key: ApiKey) -> Result<Self> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, key, agent })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn attempt(&self, body: &str) -> std::result::Result<String, String> {
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.key.0))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        if !(200..300).contains(&status) {
            let snippet: String = text.chars().take(200).collect();
            return Err(format!("HTTP {status}: {snippet}"));
        }
        response_text(&text)
    }

    /// Send `prompt` and the PNG, retrying failed requests with exponential backoff.
    pub fn complete(&self, prompt: &str, png: &[u8]) -> Result<Completion> {
        if prompt.trim().is_empty() {
            return Err(Error::Validation("prompt is empty".into()));
        }
        let body = request_body(&self.config, prompt, png).to_string();
        debug!("chat completion: model {}, {} image bytes", self.config.model, png.len());
        let start = Instant::now();
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff(attempt));
            }
            match self.attempt(&body) {
                Ok(text) => {
                    return Ok(Completion { text, latency: start.elapsed().as_secs_f64(), attempts: attempt + 1 });
                }
                Err(e) => {
                    last = redact(&e, &self.key.0);
                    warn!("oracle request {} of {} failed: {last}", attempt + 1, self.config.max_retries + 1);
                }
            }
        }
        Err(Error::OracleUnavailable(format!("{} attempts failed; last error: {last}", self.config.max_retries + 1)))
    }

    /// Ask the model about every numbered region in `query`.
    pub fn llm_query(&self, query: &OracleQuery) -> Result<OracleReply> {
        let png = encode_png(&query.image)?;
        let c = self.complete(&query.prompt, &png)?;
        let parsed = parse_reply(&c.text, query.n_regions)?;
        Ok(OracleReply {
            values: parsed.values,
            latency: c.latency,
            diagnostics: ReplyDiagnostics { clamped: parsed.clamped, uncovered: Vec::new() },
        })
    }
}

impl Oracle for LlmClient {
    fn query(&mut self, query: &OracleQuery) -> Result<OracleReply> {
        self.llm_query(query)
    }
}
