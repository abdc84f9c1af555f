//! Model backends: a network client for a local inference server and a
//! deterministic scripted stub.

mod http;
mod scripted;
pub mod tokens;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpBackendConfig};
pub use scripted::{ScriptedBackend, ScriptedBehavior, ScriptedResponse, WILDCARD};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("backend `{backend}` unreachable after {attempts} attempt(s): {message}")]
    Transport {
        backend: String,
        attempts: u32,
        message: String,
    },
    #[error("backend `{backend}` overloaded (status {status})")]
    Overloaded { backend: String, status: u16 },
    #[error("backend `{backend}` timed out after {timeout:?}")]
    Timeout { backend: String, timeout: Duration },
    #[error("backend `{backend}` returned status {status}: {body}")]
    Status { backend: String, status: u16, body: String },
    #[error("malformed reply from backend `{backend}`: {reason}")]
    Malformed { backend: String, reason: String },
    #[error("backend document: {0}")]
    Document(String),
    #[error("throughput undefined for zero elapsed time")]
    ZeroDuration,
}

impl BackendError {
    /// Whether the backend could not be reached at all.
    pub fn is_unreachable(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }
}

/// Decoding controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationParams {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    /// `false` means greedy decoding; temperature and top-p are then ignored.
    #[serde(default)]
    pub do_sample: bool,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_temperature() -> f64 {
    0.8
}

fn default_top_p() -> f64 {
    0.95
}

fn default_max_new_tokens() -> u32 {
    400
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: default_temperature(),
            top_p: default_top_p(),
            do_sample: false,
            max_new_tokens: default_max_new_tokens(),
            seed: None,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature > 0.0 && self.temperature <= 2.0) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be in (0, 2], got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::InvalidRequest(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_new_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

/// Identifies which answer a request produces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestContext {
    pub task_id: String,
    pub attempt_index: u32,
    pub chain_depth: u32,
}

#[derive(Debug, Clone)]
pub struct GenerationRequest<'a> {
    pub prompt: &'a str,
    pub params: &'a GenerationParams,
    pub context: &'a RequestContext,
}

impl GenerationRequest<'_> {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        self.params.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub elapsed: Duration,
    /// Token counts came from the proxy tokenizer, not the backend.
    pub estimated: bool,
}

/// Completion tokens per second for one result.
pub fn throughput(result: &GenerationResult) -> Result<f64, BackendError> {
    if result.elapsed.is_zero() {
        return Err(BackendError::ZeroDuration);
    }
    Ok(result.completion_tokens as f64 / result.elapsed.as_secs_f64())
}

/// A model endpoint. Handles are shared across threads.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    /// Called once before a model's datasets are evaluated.
    fn load(&self) -> Result<(), BackendError> {
        Ok(())
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<GenerationResult, BackendError>;

    /// Called after the model's last dataset. Best effort.
    fn unload(&self) -> Result<(), BackendError> {
        Ok(())
    }
}
