//! Chat-completion clients, scripted mock models, the request journal and
//! reply parsing.

mod http;
mod journal;
mod mock;
mod parse;
mod run;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalgen::{Framing, Label, Task};

pub use http::{Clock, HttpModel, HttpReply, SystemClock, Transport, TransportError, UreqTransport};
pub use journal::{Journal, JournalEntry};
pub use mock::{MockModel, MockScript};
pub use parse::{parse_answer, Answer, AnswerParser, ExpectedKind, ParsedAnswer, DEFAULT_REFUSAL_PATTERNS};
pub use run::{read_results, run_suite, write_results, EvalRecord, RunOptions};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("model config: {0}")]
    Config(String),
    #[error("request rejected with HTTP {status}: {excerpt}")]
    Request { status: u16, excerpt: String },
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("malformed response: {0}")]
    Response(String),
    #[error("journal: {0}")]
    Journal(#[from] std::io::Error),
    #[error(transparent)]
    Prompt(#[from] crate::prompts::PromptError),
}

fn default_temperature() -> f64 {
    0.3
}
fn default_max_retries() -> usize {
    5
}
fn default_timeout_secs() -> f64 {
    60.0
}
fn default_rpm() -> f64 {
    60.0
}
fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_backoff_ms() -> u64 {
    1000
}
fn default_backoff_max_ms() -> u64 {
    60_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model_name: String,
    /// Full chat-completions URL, e.g. `https://host/v1/chat/completions`.
    pub endpoint_url: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: f64,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_backoff_max_ms")]
    pub backoff_max_ms: u64,
}

impl ModelConfig {
    pub fn new(model_name: &str, endpoint_url: &str) -> Self {
        ModelConfig {
            model_name: model_name.into(),
            endpoint_url: endpoint_url.into(),
            temperature: default_temperature(),
            max_retries: default_max_retries(),
            timeout_secs: default_timeout_secs(),
            requests_per_minute: default_rpm(),
            api_key_env: default_api_key_env(),
            max_tokens: None,
            backoff_ms: default_backoff_ms(),
            backoff_max_ms: default_backoff_max_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::Config("temperature must be >= 0".into()));
        }
        if !(self.requests_per_minute.is_finite() && self.requests_per_minute >= 1.0) {
            return Err(LlmError::Config("requests_per_minute must be >= 1".into()));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(LlmError::Config("timeout_secs must be > 0".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Spacing between request starts that keeps under the rate cap.
    pub fn min_interval(&self) -> Duration {
        Duration::from_secs_f64(60.0 / self.requests_per_minute)
    }

    pub fn backoff(&self, retry: usize) -> Duration {
        let ms = self.backoff_ms.saturating_mul(1u64 << retry.min(32)).min(self.backoff_max_ms);
        Duration::from_millis(ms)
    }
}

/// One prompt plus the case metadata mock models answer from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub case_id: String,
    pub task: Task,
    pub platform: String,
    pub framing: Framing,
    pub target_word: String,
    pub gold_label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrier_post: Option<String>,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    /// HTTP status, absent for transport failures.
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub attempts: Vec<Attempt>,
}

pub trait ChatModel: Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError>;
}
