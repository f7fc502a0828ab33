//! The one place that talks to a language model.
//!
//! Every prompt in the pipeline goes through a [`Gateway`]. The live backend
//! speaks a chat-completion HTTP protocol; the scripted backend plays back
//! fixed responses so whole pipelines can be replayed offline.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[cfg(feature = "live")]
mod live;
mod scripted;

#[cfg(feature = "live")]
pub use live::{LiveConfig, LiveGateway};
pub use scripted::{ScriptFile, ScriptedGateway, TranscriptEntry};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    /// The provider answered but refused or rejected the request.
    #[error("provider rejected the request: {0}")]
    Content(String),
    #[error("script underrun after {calls} calls")]
    ScriptUnderrun { calls: usize },
    #[error("no scripted response for prompt digest {digest}")]
    ScriptMissing { digest: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Transport(_) | GatewayError::RateLimited(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub seed_hint: Option<u64>,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} is not a non-negative number",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendTag {
    Live,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    /// Raw model output, possibly empty.
    pub text: String,
    pub usage: Option<Usage>,
    pub backend_tag: BackendTag,
}

pub trait Gateway: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError>;
}

impl<G: Gateway + ?Sized> Gateway for &G {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        (**self).complete(request)
    }
}

impl<G: Gateway + ?Sized> Gateway for Box<G> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        (**self).complete(request)
    }
}

impl<G: Gateway + ?Sized> Gateway for std::sync::Arc<G> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        (**self).complete(request)
    }
}

/// Gateway backed by a closure from prompt to text. Handy for stubs.
pub struct FnGateway<F>(pub F);

impl<F> Gateway for FnGateway<F>
where
    F: Fn(&str) -> Result<String, GatewayError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let text = (self.0)(&request.prompt)?;
        Ok(CompletionResponse { text, usage: None, backend_tag: BackendTag::Scripted })
    }
}

/// Model settings shared by every request a component sends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSettings {
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub seed_hint: Option<u64>,
}

fn default_max_output_tokens() -> u32 {
    4096
}

impl CompletionSettings {
    pub fn new(model_id: impl Into<String>) -> Self {
        CompletionSettings {
            model_id: model_id.into(),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            seed_hint: None,
        }
    }

    pub fn request(&self, prompt: impl Into<String>) -> CompletionRequest {
        CompletionRequest {
            model_id: self.model_id.clone(),
            prompt: prompt.into(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            seed_hint: self.seed_hint,
        }
    }
}

/// Hex SHA-256 of a prompt; the key for digest-mode scripts.
pub fn prompt_digest(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Capped exponential backoff: `max_retries` retries after the first attempt,
/// waiting `base_delay * 2^k` before retry k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, base_delay: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        RetryPolicy { max_retries, base_delay: Duration::ZERO }
    }

    pub fn delay_before_retry(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

pub fn with_retry<T>(
    policy: &RetryPolicy,
    mut attempt: impl FnMut(u32) -> Result<T, GatewayError>,
) -> Result<T, GatewayError> {
    let mut retry = 0;
    loop {
        match attempt(retry) {
            Ok(v) => return Ok(v),
            Err(e) if e.is_retryable() && retry < policy.max_retries => {
                let wait = policy.delay_before_retry(retry);
                log::warn!("{e}; retrying in {wait:?}");
                if !wait.is_zero() {
                    std::thread::sleep(wait);
                }
                retry += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(max: usize) -> Self {
        Limiter { max: max.max(1), in_flight: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|p| p.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n += 1;
        Permit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.in_flight.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_flight.lock().unwrap_or_else(|p| p.into_inner());
        *n -= 1;
        self.limiter.freed.notify_one();
    }
}
