//! OpenAI-compatible chat-completions client.

use super::{strip_stop, BackendError, CompletionBackend, CompletionRequest, CompletionResponse, RateLimiter, Usage};
use serde::Deserialize;
use serde_json::json;
use std::sync::Arc;
use std::time::Duration;
use tracing::{debug, warn};

pub const API_KEY_ENV: &str = "HICRL_API_KEY";
pub const BASE_URL_ENV: &str = "HICRL_BASE_URL";

/// Exponential backoff for transient failures (429, 5xx, timeouts).
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_delay: Duration,
    pub multiplier: f64,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            initial_delay: Duration::from_millis(500),
            multiplier: 2.0,
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let secs = self.initial_delay.as_secs_f64() * self.multiplier.powi(attempt as i32);
        Duration::from_secs_f64(secs).min(self.max_delay)
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub api_key: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub requests_per_minute: Option<u32>,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key: api_key.into(),
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
            requests_per_minute: None,
        }
    }

    /// Read the API key from `HICRL_API_KEY`.
    pub fn from_env(base_url: impl Into<String>, model: impl Into<String>) -> Result<Self, BackendError> {
        match std::env::var(API_KEY_ENV) {
            Ok(key) if !key.trim().is_empty() => Ok(Self::new(base_url, model, key)),
            _ => Err(BackendError::Auth(format!("{API_KEY_ENV} is not set"))),
        }
    }
}

/// Thread-safe client; clones share the connection pool and the rate limiter.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    config: HttpConfig,
    limiter: Option<Arc<RateLimiter>>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<ApiUsage>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    message: Option<Message>,
    // legacy completions endpoint
    #[serde(default)]
    text: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ApiUsage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

enum Attempt {
    Done(Result<CompletionResponse, BackendError>),
    Retry { message: String, after: Option<Duration> },
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        if config.api_key.trim().is_empty() {
            return Err(BackendError::Auth(format!("{API_KEY_ENV} is not set")));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        let endpoint = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        let limiter = config
            .requests_per_minute
            .map(|rpm| Arc::new(RateLimiter::per_minute(rpm)));
        Ok(HttpBackend {
            client,
            endpoint,
            config,
            limiter,
        })
    }

    /// Share an existing limiter (e.g. across several backends of one process).
    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn body(&self, request: &CompletionRequest) -> serde_json::Value {
        // The API accepts at most four stop sequences.
        let stop: Vec<&str> = request.stop_sequences.iter().take(4).map(String::as_str).collect();
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "stop": stop,
        })
    }

    fn attempt(&self, request: &CompletionRequest, body: &serde_json::Value) -> Attempt {
        if let Some(limiter) = &self.limiter {
            limiter.acquire();
        }
        let sent = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.config.api_key)
            .json(body)
            .send();
        let resp = match sent {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry {
                    message: e.to_string(),
                    after: None,
                }
            }
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(Duration::from_secs_f64);
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Retry {
                    message: e.to_string(),
                    after: None,
                }
            }
        };
        match status {
            200..=299 => Attempt::Done(self.parse(request, &text)),
            401 | 403 => Attempt::Done(Err(BackendError::Auth(text))),
            400 | 413 if is_context_overflow(&text) => Attempt::Done(Err(BackendError::Budget(text))),
            408 | 409 | 429 | 500..=599 => Attempt::Retry {
                message: format!("status {status}: {text}"),
                after: retry_after,
            },
            _ => Attempt::Done(Err(BackendError::Rejected { status, body: text })),
        }
    }

    fn parse(&self, request: &CompletionRequest, body: &str) -> Result<CompletionResponse, BackendError> {
        let parsed: ChatResponse = serde_json::from_str(body).map_err(|e| BackendError::Protocol(e.to_string()))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Protocol("no choices".into()))?;
        let text = choice
            .message
            .and_then(|m| m.content)
            .or(choice.text)
            .ok_or_else(|| BackendError::Protocol("choice has no content".into()))?;
        let usage = parsed
            .usage
            .map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        Ok(CompletionResponse {
            text: strip_stop(&text, &request.stop_sequences),
            usage,
            provider: format!("http:{}", self.config.model),
        })
    }
}

fn is_context_overflow(body: &str) -> bool {
    let lower = body.to_ascii_lowercase();
    lower.contains("context_length_exceeded")
        || lower.contains("maximum context length")
        || lower.contains("context length")
        || lower.contains("too many tokens")
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let body = self.body(request);
        let policy = &self.config.retry;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(request, &body) {
                Attempt::Done(result) => {
                    debug!(role = ?request.role_hint, attempts, ok = result.is_ok(), "completion");
                    return result;
                }
                Attempt::Retry { message, after } => {
                    if attempts > policy.max_retries {
                        return Err(BackendError::Transport { attempts, message });
                    }
                    let delay = after
                        .unwrap_or_else(|| policy.delay(attempts - 1))
                        .min(policy.max_delay);
                    warn!(attempts, ?delay, %message, "transient completion failure, retrying");
                    std::thread::sleep(delay);
                }
            }
        }
    }

    fn name(&self) -> &str {
        "http"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy {
            max_retries: 5,
            initial_delay: Duration::from_millis(100),
            multiplier: 2.0,
            max_delay: Duration::from_millis(350),
        };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(2), Duration::from_millis(350));
    }

    #[test]
    fn overflow_detection() {
        assert!(is_context_overflow(r#"{"error":{"code":"context_length_exceeded"}}"#));
        assert!(is_context_overflow(
            "This model's maximum context length is 4097 tokens"
        ));
        assert!(!is_context_overflow(r#"{"error":"bad temperature"}"#));
    }

    #[test]
    fn missing_key_is_auth_error() {
        let cfg = HttpConfig::new("http://localhost:1", "m", "");
        assert!(matches!(HttpBackend::new(cfg), Err(BackendError::Auth(_))));
    }
}
