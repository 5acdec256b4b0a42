use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{Attempt, ChatModel, ChatRequest, Completion, LlmError, ModelConfig};

/// Monotonic time source, replaceable in tests.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportError(pub String);

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &Value, timeout: Duration) -> Result<HttpReply, TransportError>;
}

#[derive(Debug, Default)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value, timeout: Duration) -> Result<HttpReply, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        let mut response = agent
            .post(url)
            .header("Authorization", &format!("Bearer {bearer}"))
            .send_json(body)
            .map_err(|e| TransportError(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpReply { status, body })
    }
}

/// OpenAI-compatible chat-completions client with retries and a request
/// rate cap shared by all threads using it.
pub struct HttpModel<T: Transport = UreqTransport, C: Clock = SystemClock> {
    config: ModelConfig,
    api_key: String,
    transport: T,
    clock: C,
    next_slot: Mutex<Option<Duration>>,
}

impl HttpModel {
    pub fn from_env(config: ModelConfig) -> Result<Self, LlmError> {
        HttpModel::with_parts(config, |name| std::env::var(name).ok(), UreqTransport, SystemClock::default())
    }
}

impl<T: Transport, C: Clock> HttpModel<T, C> {
    /// Resolves the API key through `lookup` before anything touches the
    /// network.
    pub fn with_parts(config: ModelConfig, lookup: impl Fn(&str) -> Option<String>, transport: T, clock: C) -> Result<Self, LlmError> {
        config.validate()?;
        let api_key = lookup(&config.api_key_env)
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        Ok(HttpModel {
            config,
            api_key,
            transport,
            clock,
            next_slot: Mutex::new(None),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Reserves the next start slot, then sleeps until it arrives.
    fn wait_for_slot(&self) {
        let start = {
            let mut next = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
            let now = self.clock.now();
            let start = next.map_or(now, |n| n.max(now));
            *next = Some(start + self.config.min_interval());
            start
        };
        let now = self.clock.now();
        if start > now {
            self.clock.sleep(start - now);
        }
    }

    fn body(&self, prompt: &str) -> Value {
        let mut body = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        });
        if let Some(max) = self.config.max_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }
}

fn excerpt(body: &str) -> String {
    let mut s: String = body.chars().take(300).collect();
    if s.len() < body.len() {
        s.push_str("...");
    }
    s
}

fn reply_text(body: &str) -> Result<String, LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Response(format!("{e}: {}", excerpt(body))))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::Response(format!("no choices[0].message.content in {}", excerpt(body))))
}

impl<T: Transport, C: Clock> ChatModel for HttpModel<T, C> {
    fn name(&self) -> &str {
        &self.config.model_name
    }

    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        let body = self.body(&request.prompt);
        let mut attempts = Vec::new();
        loop {
            self.wait_for_slot();
            let started = self.clock.now();
            let result = self.transport.post_json(&self.config.endpoint_url, &self.api_key, &body, self.config.timeout());
            let latency_ms = (self.clock.now().saturating_sub(started)).as_millis() as u64;
            let last_error = match result {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    attempts.push(Attempt {
                        status: Some(reply.status),
                        error: None,
                        latency_ms,
                    });
                    let text = reply_text(&reply.body)?;
                    return Ok(Completion { text, attempts });
                }
                Ok(reply) if reply.status == 429 || reply.status >= 500 => {
                    attempts.push(Attempt {
                        status: Some(reply.status),
                        error: Some(excerpt(&reply.body)),
                        latency_ms,
                    });
                    format!("HTTP {}: {}", reply.status, excerpt(&reply.body))
                }
                Ok(reply) => {
                    return Err(LlmError::Request {
                        status: reply.status,
                        excerpt: excerpt(&reply.body),
                    })
                }
                Err(TransportError(message)) => {
                    attempts.push(Attempt {
                        status: None,
                        error: Some(message.clone()),
                        latency_ms,
                    });
                    message
                }
            };
            let retries_done = attempts.len() - 1;
            if retries_done >= self.config.max_retries {
                return Err(LlmError::Transport {
                    attempts: attempts.len(),
                    message: last_error,
                });
            }
            log::warn!("{}: attempt {} failed ({last_error}), retrying", request.case_id, attempts.len());
            self.clock.sleep(self.config.backoff(retries_done));
        }
    }
}
