//! Chat-completion gateway.
//!
//! Every generation step talks to a language model through [`Gateway`]. The
//! gateway attaches the sampling row for the request's [`StepId`], bounds the
//! number of in-flight calls, retries transport failures with exponential
//! backoff and hands the completion text back to the caller. Backends are
//! pluggable: [`HttpChatBackend`] speaks the usual `messages` JSON protocol and
//! [`MockChatBackend`] replays a script so that whole pipeline runs are
//! reproducible offline.

mod canned;
mod http;
mod mock;
mod settings;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::ExtractError;
use crate::sync::Semaphore;

pub use http::HttpChatBackend;
pub use mock::{MockChatBackend, RecordedCall, ScriptError, ScriptRecord};
pub use settings::{GenSettings, SettingsTable, StepId};

/// A prompt split into its system message and user instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_message: String,
    pub instruction: String,
    pub step_id: StepId,
}

impl ChatRequest {
    pub fn new(step_id: StepId, system_message: impl Into<String>, instruction: impl Into<String>) -> Self {
        Self {
            system_message: system_message.into(),
            instruction: instruction.into(),
            step_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionText {
    pub text: String,
    pub backend_id: String,
    /// 1-based attempt that produced `text`.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: String,
    pub content: String,
}

/// JSON body POSTed to a chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub model: String,
    pub messages: Vec<WireMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub max_tokens: u32,
}

impl WireRequest {
    pub fn build(model: &str, request: &ChatRequest, settings: GenSettings) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![
                WireMessage {
                    role: "system".into(),
                    content: request.system_message.clone(),
                },
                WireMessage {
                    role: "user".into(),
                    content: request.instruction.clone(),
                },
            ],
            temperature: settings.temperature,
            top_p: settings.top_p,
            frequency_penalty: settings.frequency_penalty,
            presence_penalty: settings.presence_penalty,
            max_tokens: settings.max_tokens,
        }
    }

    pub fn settings(&self) -> GenSettings {
        GenSettings::new(
            self.temperature,
            self.top_p,
            self.frequency_penalty,
            self.presence_penalty,
            self.max_tokens,
        )
    }

    pub fn instruction(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
}

/// A chat-completion backend. Implementations must be shareable across workers.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;

    /// Sends one wire request. `step` is passed alongside so scripted backends
    /// can key on it; it is not part of the wire body.
    fn send(&self, step: StepId, request: &WireRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1` (doubling from `base_delay`).
    pub fn delay_after(&self, attempt: u32) -> Duration {
        self.base_delay
            .saturating_mul(1u32 << attempt.saturating_sub(1).min(16))
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend `{backend}` unavailable after {attempts} attempt(s): {last}")]
    BackendUnavailable {
        backend: String,
        attempts: u32,
        last: BackendError,
    },
    #[error("backend `{backend}` returned an empty completion for step `{step}`")]
    EmptyCompletion { backend: String, step: StepId },
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

/// Shareable chat client: settings table, retry policy and a global
/// concurrency bound in front of one backend.
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    settings: SettingsTable,
    retry: RetryPolicy,
    limiter: Semaphore,
    model: String,
}

impl Gateway {
    pub const DEFAULT_CONCURRENCY: usize = 8;

    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            settings: SettingsTable::default(),
            retry: RetryPolicy::default(),
            limiter: Semaphore::new(Self::DEFAULT_CONCURRENCY),
            model: "gpt-3.5-turbo-0125".to_string(),
        }
    }

    pub fn with_settings(mut self, settings: SettingsTable) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency(mut self, limit: usize) -> Self {
        self.limiter = Semaphore::new(limit);
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn settings(&self) -> &SettingsTable {
        &self.settings
    }

    pub fn wire_request(&self, request: &ChatRequest) -> WireRequest {
        WireRequest::build(&self.model, request, self.settings.get(request.step_id))
    }

    pub fn complete_chat(&self, request: &ChatRequest) -> Result<CompletionText, GatewayError> {
        let wire = self.wire_request(request);
        let backend = self.backend.id().to_string();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = {
                let _permit = self.limiter.acquire();
                self.backend.send(request.step_id, &wire)
            };
            match result {
                Ok(text) => {
                    let text = text.trim().to_string();
                    if text.is_empty() {
                        return Err(GatewayError::EmptyCompletion {
                            backend,
                            step: request.step_id,
                        });
                    }
                    return Ok(CompletionText {
                        text,
                        backend_id: backend,
                        attempt,
                    });
                }
                Err(err) if attempt < self.retry.max_attempts => {
                    tracing::warn!(step = %request.step_id, attempt, error = %err, "chat backend call failed, retrying");
                    std::thread::sleep(self.retry.delay_after(attempt));
                }
                Err(last) => {
                    return Err(GatewayError::BackendUnavailable {
                        backend,
                        attempts: attempt,
                        last,
                    })
                }
            }
        }
    }

    /// Completes `request` and runs `parse` over the text. A failing parse
    /// triggers exactly one regeneration; the second failure is returned.
    pub fn complete_parsed<T, E>(
        &self,
        request: &ChatRequest,
        mut parse: impl FnMut(&str) -> Result<T, E>,
    ) -> Result<(T, CompletionText), GenerationError<E>> {
        let mut last_err = None;
        for round in 0..2 {
            let completion = self.complete_chat(request).map_err(GenerationError::Gateway)?;
            match parse(&completion.text) {
                Ok(value) => return Ok((value, completion)),
                Err(err) => {
                    if round == 0 {
                        tracing::debug!(step = %request.step_id, "unusable completion, regenerating once");
                    }
                    last_err = Some(err);
                }
            }
        }
        Err(GenerationError::Rejected(
            last_err.expect("loop ran at least once"),
        ))
    }
}

/// Failure of [`Gateway::complete_parsed`]: either the call itself failed or
/// both completions were rejected by the parser.
#[derive(Debug, Error)]
pub enum GenerationError<E> {
    #[error(transparent)]
    Gateway(GatewayError),
    #[error("{0}")]
    Rejected(E),
}
