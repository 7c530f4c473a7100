//! Text-completion providers.
//!
//! Every policy query (goal, think, action, finish, reflection) goes through a
//! [`CompletionBackend`]. Three providers ship with the crate:
//!
//! - [`HttpBackend`]: OpenAI-compatible chat completions with retry/backoff and a
//!   global requests-per-minute limiter.
//! - [`ScriptedBackend`]: ordered playback of a JSONL fixture, keyed by
//!   `(scenario, episode)` and call order.
//! - [`RecordingBackend`]: wraps any backend and records every exchange; its
//!   log can be written out as a fixture for later replay.

mod http;
mod limiter;
mod recording;
mod scripted;

pub use http::{HttpBackend, HttpConfig, RetryPolicy, API_KEY_ENV, BASE_URL_ENV};
pub use limiter::RateLimiter;
pub use recording::{Exchange, RecordingBackend};
pub use scripted::{AuditEntry, FixtureBuilder, FixtureEntry, ScriptedBackend};

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_STOP: &str = "\n[";
pub const DECISION_MAX_TOKENS: u32 = 128;
pub const REFLECTION_MAX_TOKENS: u32 = 96;

/// Which query a request carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleHint {
    Goal,
    Think,
    Action,
    Finish,
    ReflectLow,
    ReflectHigh,
    ReflectFull,
}

impl RoleHint {
    pub fn is_reflection(self) -> bool {
        matches!(
            self,
            RoleHint::ReflectLow | RoleHint::ReflectHigh | RoleHint::ReflectFull
        )
    }
}

/// Identifies the episode a request belongs to; scripted playback is keyed by it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionKey {
    pub scenario: String,
    pub episode: u32,
}

impl SessionKey {
    pub fn new(scenario: impl Into<String>, episode: u32) -> Self {
        SessionKey {
            scenario: scenario.into(),
            episode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub session: SessionKey,
    pub prompt: String,
    pub stop_sequences: Vec<String>,
    pub max_tokens: u32,
    pub temperature: f64,
    pub role_hint: RoleHint,
}

impl CompletionRequest {
    /// Request with the default decoding settings for `role`.
    pub fn new(session: SessionKey, role_hint: RoleHint, prompt: impl Into<String>) -> Self {
        let max_tokens = if role_hint.is_reflection() {
            REFLECTION_MAX_TOKENS
        } else {
            DECISION_MAX_TOKENS
        };
        CompletionRequest {
            session,
            prompt: prompt.into(),
            stop_sequences: vec![DEFAULT_STOP.to_string()],
            max_tokens,
            temperature: 0.0,
            role_hint,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.trim().is_empty() {
            return Err(BackendError::Input("empty prompt".into()));
        }
        if self.stop_sequences.is_empty() || self.stop_sequences.iter().any(String::is_empty) {
            return Err(BackendError::Input("stop sequences must be non-empty".into()));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::Input("max_tokens must be positive".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::Input(format!("invalid temperature {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    /// Completion text with any stop sequence (and what follows it) removed.
    pub text: String,
    pub usage: Usage,
    pub provider: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    Input(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("prompt exceeds provider context: {0}")]
    Budget(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider rejected request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Protocol(String),
    #[error("fixture exhausted for {scenario} episode {episode} at call {seq}")]
    FixtureExhausted { scenario: String, episode: u32, seq: usize },
    #[error("invalid fixture: {0}")]
    Fixture(String),
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;

    /// Short provider identifier used in logs and responses.
    fn name(&self) -> &str;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for &T {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Box<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Cut `text` at the earliest occurrence of any stop sequence.
pub fn strip_stop(text: &str, stops: &[String]) -> String {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    text[..cut].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_defaults_follow_role() {
        let s = SessionKey::new("x", 1);
        let r = CompletionRequest::new(s.clone(), RoleHint::Finish, "p");
        assert_eq!(r.max_tokens, 128);
        assert_eq!(r.temperature, 0.0);
        assert_eq!(r.stop_sequences, vec!["\n[".to_string()]);
        let r = CompletionRequest::new(s, RoleHint::ReflectHigh, "p");
        assert_eq!(r.max_tokens, 96);
    }

    #[test]
    fn empty_prompt_rejected() {
        let r = CompletionRequest::new(SessionKey::new("x", 1), RoleHint::Goal, "  ");
        assert!(matches!(r.validate(), Err(BackendError::Input(_))));
        let mut r = CompletionRequest::new(SessionKey::new("x", 1), RoleHint::Goal, "p");
        r.stop_sequences.clear();
        assert!(matches!(r.validate(), Err(BackendError::Input(_))));
    }

    #[test]
    fn stop_sequences_are_stripped() {
        let stops = vec!["\n[".to_string()];
        assert_eq!(strip_stop("go to fridge 1\n[Finish] Yes", &stops), "go to fridge 1");
        assert_eq!(strip_stop("plain", &stops), "plain");
        let two = vec!["\n[".to_string(), "\nObservation".to_string()];
        assert_eq!(strip_stop("a\nObservation: x\n[b", &two), "a");
    }
}
