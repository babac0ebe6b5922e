//! Completion providers used as genetic operators.
//!
//! Three backends share one trait: an HTTP chat-completions client, a
//! scripted replay of canned responses, and a grammar sampler that emits
//! random valid rules. The two offline backends are deterministic.

mod http;
mod sampler;
mod scripted;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpConfig, HttpProvider, RetryPolicy, API_KEY_ENV};
pub use sampler::{sample_ast, sample_rule, SamplerProvider, SAMPLER_CONTEXT};
pub use scripted::{ScriptRecord, ScriptedProvider};

/// Which engine step issued a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestTag {
    Init,
    Reflection,
    Crossover,
    Mutation,
    Narrate,
}

impl RequestTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestTag::Init => "init",
            RequestTag::Reflection => "reflection",
            RequestTag::Crossover => "crossover",
            RequestTag::Mutation => "mutation",
            RequestTag::Narrate => "narrate",
        }
    }
}

impl fmt::Display for RequestTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RequestTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "init" => RequestTag::Init,
            "reflection" => RequestTag::Reflection,
            "crossover" => RequestTag::Crossover,
            "mutation" => RequestTag::Mutation,
            "narrate" => RequestTag::Narrate,
            other => return Err(format!("unknown request tag `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub tag: RequestTag,
}

impl CompletionRequest {
    pub fn new(tag: RequestTag, system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: 0.2,
            max_tokens: 1024,
            tag,
        }
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    fn validate(&self) -> Result<(), ProviderError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("prompts must be non-empty".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ProviderError::InvalidRequest("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub provider_id: String,
    pub latency_ms: u64,
    pub attempt: u32,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("request failed after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("endpoint rejected the request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("scripted responses exhausted for tag `{0}`")]
    Exhausted(RequestTag),
    #[error("malformed provider config: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed response: {0}")]
    Response(String),
}

pub trait Provider: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ProviderError>;

    /// How many requests the engine may have outstanding at once.
    fn max_in_flight(&self) -> usize {
        1
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ProviderError> {
        (**self).complete(request)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

impl<P: Provider + ?Sized> Provider for std::sync::Arc<P> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ProviderError> {
        (**self).complete(request)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    Scripted,
    Sampler,
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" => Ok(ProviderKind::Http),
            "scripted" => Ok(ProviderKind::Scripted),
            "sampler" => Ok(ProviderKind::Sampler),
            other => Err(format!("unknown provider `{other}` (expected http, scripted or sampler)")),
        }
    }
}
