use std::time::{Duration, Instant};

use log::{debug, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CompletionRequest, CompletionResult, Provider, ProviderError};

/// Environment variable holding the bearer token. Never read from files.
pub const API_KEY_ENV: &str = "PILLM_API_KEY";

/// Exponential backoff with full jitter: before retry `n` (1-based) the
/// client sleeps a uniform random duration in `[0, base * factor^(n-1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base_delay: Duration,
    pub factor: f64,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base_delay: Duration::from_secs(1),
            factor: 2.0,
            max_attempts: 5,
        }
    }
}

impl RetryPolicy {
    pub fn backoff_ceiling(&self, retry: u32) -> Duration {
        self.base_delay
            .mul_f64(self.factor.powi(retry.saturating_sub(1) as i32))
    }

    fn sleep_before(&self, retry: u32) {
        let ceiling = self.backoff_ceiling(retry);
        if ceiling.is_zero() {
            return;
        }
        let jittered = rand::rng().random_range(Duration::ZERO..ceiling);
        std::thread::sleep(jittered);
    }
}

/// Keys of the `[provider]` block for the HTTP backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Overrides the engine's per-operator temperatures when set.
    #[serde(default)]
    pub temperature: Option<f64>,
    /// Overrides the engine's token limit when set.
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout() -> u64 {
    60
}

fn default_in_flight() -> usize {
    4
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: None,
            max_tokens: None,
            timeout_secs: default_timeout(),
            max_in_flight: default_in_flight(),
        }
    }
}

/// Chat-completions client: POSTs a system + user message pair and returns
/// the first choice's message content.
pub struct HttpProvider {
    config: HttpConfig,
    api_key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl HttpProvider {
    /// Builds a client, reading the API key from [`API_KEY_ENV`].
    pub fn from_env(config: HttpConfig) -> Result<Self, ProviderError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        if key.is_none() {
            warn!("{API_KEY_ENV} is not set; sending requests without an Authorization header");
        }
        Self::new(config, key)
    }

    pub fn new(config: HttpConfig, api_key: Option<String>) -> Result<Self, ProviderError> {
        if !(config.endpoint.starts_with("http://") || config.endpoint.starts_with("https://")) {
            return Err(ProviderError::Config(format!(
                "endpoint {:?} is not an http(s) URL",
                config.endpoint
            )));
        }
        if config.model.trim().is_empty() {
            return Err(ProviderError::Config("model must be set".into()));
        }
        if config.timeout_secs == 0 || config.max_in_flight == 0 {
            return Err(ProviderError::Config(
                "timeout_secs and max_in_flight must be positive".into(),
            ));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            api_key,
            retry: RetryPolicy::default(),
            agent,
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "temperature": self.config.temperature.unwrap_or(req.temperature),
            "max_tokens": self.config.max_tokens.unwrap_or(req.max_tokens),
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, Attempt> {
        let mut call = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match call.send_json(body) {
            Ok(r) => r,
            Err(e) => return Err(Attempt::Retry(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(format!("reading body: {e}")))?;
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("status {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(ProviderError::Rejected { status, body: text }));
        }
        extract_content(&text).map_err(Attempt::Fatal)
    }
}

enum Attempt {
    Retry(String),
    Fatal(ProviderError),
}

/// Pulls `choices[0].message.content` out of a chat-completions response.
pub(crate) fn extract_content(body: &str) -> Result<String, ProviderError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| ProviderError::Response(format!("invalid JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ProviderError::Response("missing choices[0].message.content".into()))
}

impl Provider for HttpProvider {
    fn id(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ProviderError> {
        request.validate()?;
        let body = self.body(request);
        let started = Instant::now();
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts {
            if attempt > 1 {
                self.retry.sleep_before(attempt - 1);
            }
            match self.attempt(&body) {
                Ok(text) => {
                    return Ok(CompletionResult {
                        text,
                        provider_id: format!("http:{}", self.config.model),
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt,
                    })
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    debug!("{} attempt {attempt} failed: {msg}", request.tag);
                    last = msg;
                }
            }
        }
        Err(ProviderError::Network {
            attempts: self.retry.max_attempts,
            message: last,
        })
    }

    fn max_in_flight(&self) -> usize {
        self.config.max_in_flight
    }
}
