//! OpenAI-compatible chat-completions and embeddings over blocking HTTP.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, GatewayError, GenerationRequest};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    config: HttpConfig,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(Self { client, config })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.config.endpoint.trim_end_matches('/'))
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let mut backoff = self.config.retry.initial_backoff;
        let attempts = self.config.retry.attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.post_once(path, body) {
                Err(e) if e.is_retriable() && attempt < attempts => {
                    log::warn!("attempt {attempt}/{attempts} failed: {e}; retrying in {backoff:?}");
                    std::thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn post_once(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let mut req = self.client.post(self.url(path)).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(GatewayError::Auth(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(GatewayError::Http {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| GatewayError::Protocol(e.to_string()))
    }
}

impl Backend for HttpBackend {
    fn generate(&self, model: &str, req: &GenerationRequest) -> Result<String, GatewayError> {
        let body = json!({
            "model": model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let value = self.post("chat/completions", &body)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Protocol("missing choices[0].message.content".into()))
    }

    fn embed(&self, model: &str, text: &str) -> Result<Vec<f64>, GatewayError> {
        let body = json!({ "model": model, "input": text });
        let value = self.post("embeddings", &body)?;
        let arr = value["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| GatewayError::Protocol("missing data[0].embedding".into()))?;
        arr.iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| GatewayError::Protocol("non-numeric embedding".into()))
            })
            .collect()
    }
}
