use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    with_retry, BackendTag, CompletionRequest, CompletionResponse, Gateway, GatewayError, Limiter,
    RetryPolicy, Usage,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub endpoint: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_timeout() -> u64 {
    120
}

fn default_concurrency() -> usize {
    4
}

impl LiveConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        LiveConfig {
            endpoint: endpoint.into(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
            max_concurrency: default_concurrency(),
        }
    }
}

/// Chat-completion client: one user message carrying the whole prompt.
pub struct LiveGateway {
    endpoint: String,
    api_key: String,
    client: reqwest::blocking::Client,
    policy: RetryPolicy,
    limiter: Limiter,
}

impl LiveGateway {
    pub fn new(config: &LiveConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            GatewayError::Auth(format!("environment variable {} is not set", config.api_key_env))
        })?;
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: &LiveConfig, api_key: impl Into<String>) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(LiveGateway {
            endpoint: config.endpoint.clone(),
            api_key: api_key.into(),
            client,
            policy: RetryPolicy::default(),
            limiter: Limiter::new(config.max_concurrency),
        })
    }

    pub fn with_retry_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    fn send_once(&self, body: &Value) -> Result<CompletionResponse, GatewayError> {
        let _permit = self.limiter.acquire();
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        match status {
            200..=299 => parse_chat_response(&text),
            401 | 403 => Err(GatewayError::Auth(format!("HTTP {status}: {text}"))),
            429 => Err(GatewayError::RateLimited(format!("HTTP {status}: {text}"))),
            408 | 500..=599 => Err(GatewayError::Transport(format!("HTTP {status}: {text}"))),
            _ => Err(GatewayError::Content(format!("HTTP {status}: {text}"))),
        }
    }
}

pub(crate) fn chat_body(request: &CompletionRequest) -> Value {
    let mut body = json!({
        "model": request.model_id,
        "messages": [{"role": "user", "content": request.prompt}],
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    });
    if let Some(seed) = request.seed_hint {
        body["seed"] = json!(seed);
    }
    body
}

pub(crate) fn parse_chat_response(text: &str) -> Result<CompletionResponse, GatewayError> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| GatewayError::Content(format!("response is not JSON: {e}")))?;
    let message = v
        .pointer("/choices/0/message")
        .ok_or_else(|| GatewayError::Content("response has no choices".into()))?;
    let content = match message.get("content") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(other) => other.to_string(),
    };
    let usage = v.get("usage").and_then(|u| {
        Some(Usage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
        })
    });
    Ok(CompletionResponse { text: content, usage, backend_tag: BackendTag::Live })
}

impl Gateway for LiveGateway {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        request.validate()?;
        let body = chat_body(request);
        with_retry(&self.policy, |_| self.send_once(&body))
    }
}
