//! Client for a locally hosted completion server.
//!
//! Request: `POST {url}/completion` with
//! `{"prompt", "temperature", "top_p", "max_new_tokens", "do_sample", "seed"?}`.
//!
//! Accepted replies carry the text under `text`, `content`, `completion` or
//! `choices[0].text`, and optionally token counts under `usage`
//! (`prompt_tokens`, `completion_tokens`) or llama.cpp's `tokens_evaluated` /
//! `tokens_predicted`. Missing counts fall back to the proxy tokenizer and the
//! result is flagged `estimated`.
//!
//! Elapsed time is measured from sending the request to reading the last
//! byte of the reply, for the successful attempt only.

use std::io::ErrorKind;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::tokens::{proxy_token_count, truncate_to_tokens};
use super::{Backend, BackendError, GenerationRequest, GenerationResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpBackendConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub url: String,
    #[serde(default = "default_completion_path")]
    pub completion_path: String,
    /// Reachability probe sent before evaluation; any HTTP status counts as up.
    #[serde(default = "default_health_path")]
    pub health_path: String,
    /// Optional endpoint asked to release the model after evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unload_path: Option<String>,
    /// Model name forwarded to servers that host several models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_completion_path() -> String {
    "/completion".into()
}

fn default_health_path() -> String {
    "/health".into()
}

fn default_timeout_secs() -> u64 {
    300
}

fn default_max_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

impl HttpBackendConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            completion_path: default_completion_path(),
            health_path: default_health_path(),
            unload_path: None,
            model: None,
            timeout_secs: default_timeout_secs(),
            max_attempts: default_max_attempts(),
            backoff_ms: default_backoff_ms(),
        }
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    id: String,
    config: HttpBackendConfig,
    agent: ureq::Agent,
}

enum Failure {
    Retryable(String),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(id: impl Into<String>, config: HttpBackendConfig) -> Result<Self, BackendError> {
        if config.max_attempts == 0 {
            return Err(BackendError::InvalidRequest("max_attempts must be at least 1".into()));
        }
        if config.timeout_secs == 0 {
            return Err(BackendError::InvalidRequest("timeout_secs must be positive".into()));
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        Ok(Self {
            id: id.into(),
            config,
            agent,
        })
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}{}", self.config.url.trim_end_matches('/'), path)
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs(self.config.timeout_secs)
    }

    fn classify(&self, err: ureq::Error) -> Failure {
        match err {
            ureq::Error::Status(status @ (429 | 503), _) => Failure::Fatal(BackendError::Overloaded {
                backend: self.id.clone(),
                status,
            }),
            ureq::Error::Status(status, resp) => Failure::Fatal(BackendError::Status {
                backend: self.id.clone(),
                status,
                body: resp.into_string().unwrap_or_default().chars().take(500).collect(),
            }),
            ureq::Error::Transport(t) => {
                let timed_out = std::error::Error::source(&t)
                    .and_then(|s| s.downcast_ref::<std::io::Error>())
                    .is_some_and(|io| matches!(io.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock));
                if timed_out {
                    Failure::Fatal(BackendError::Timeout {
                        backend: self.id.clone(),
                        timeout: self.timeout(),
                    })
                } else {
                    Failure::Retryable(t.to_string())
                }
            }
        }
    }

    /// Runs `call` up to `max_attempts` times, retrying transport errors only.
    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T, Failure>) -> Result<T, BackendError> {
        let mut last = String::new();
        for attempt in 0..self.config.max_attempts {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                thread::sleep(Duration::from_millis(delay));
            }
            match call() {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => {
                    log::warn!("backend {}: attempt {} failed: {msg}", self.id, attempt + 1);
                    last = msg;
                }
            }
        }
        Err(BackendError::Transport {
            backend: self.id.clone(),
            attempts: self.config.max_attempts,
            message: last,
        })
    }

    fn parse_reply(
        &self,
        body: &str,
        request: &GenerationRequest<'_>,
        elapsed: Duration,
    ) -> Result<GenerationResult, BackendError> {
        let malformed = |reason: String| BackendError::Malformed {
            backend: self.id.clone(),
            reason,
        };
        let value: Value = serde_json::from_str(body).map_err(|e| malformed(e.to_string()))?;
        let text = ["text", "content", "completion"]
            .iter()
            .find_map(|k| value.get(*k).and_then(Value::as_str))
            .or_else(|| value.pointer("/choices/0/text").and_then(Value::as_str))
            .ok_or_else(|| malformed("reply carries no completion text".into()))?;
        let count = |ptrs: &[&str]| ptrs.iter().find_map(|p| value.pointer(p).and_then(Value::as_u64));
        let prompt_tokens = count(&["/usage/prompt_tokens", "/tokens_evaluated"]);
        let completion_tokens = count(&["/usage/completion_tokens", "/tokens_predicted"]);
        let max = u64::from(request.params.max_new_tokens);
        Ok(match (prompt_tokens, completion_tokens) {
            (Some(p), Some(c)) => GenerationResult {
                text: text.to_string(),
                prompt_tokens: p,
                completion_tokens: c,
                elapsed,
                estimated: false,
            },
            _ => {
                let text = truncate_to_tokens(text, max);
                GenerationResult {
                    text: text.to_string(),
                    prompt_tokens: prompt_tokens.unwrap_or_else(|| proxy_token_count(request.prompt)),
                    completion_tokens: proxy_token_count(text),
                    elapsed,
                    estimated: true,
                }
            }
        })
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn load(&self) -> Result<(), BackendError> {
        let url = self.endpoint(&self.config.health_path);
        self.with_retries(|| match self.agent.get(&url).call() {
            Ok(_) | Err(ureq::Error::Status(..)) => Ok(()),
            Err(e) => Err(self.classify(e)),
        })
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<GenerationResult, BackendError> {
        request.validate()?;
        let p = request.params;
        let mut body = serde_json::json!({
            "prompt": request.prompt,
            "temperature": p.temperature,
            "top_p": p.top_p,
            "max_new_tokens": p.max_new_tokens,
            "do_sample": p.do_sample,
        });
        if let Some(seed) = p.seed {
            body["seed"] = seed.into();
        }
        if let Some(model) = &self.config.model {
            body["model"] = model.clone().into();
        }
        let url = self.endpoint(&self.config.completion_path);
        let (text, elapsed) = self.with_retries(|| {
            let start = Instant::now();
            let resp = self.agent.post(&url).send_json(&body).map_err(|e| self.classify(e))?;
            let text = resp.into_string().map_err(|e| Failure::Retryable(e.to_string()))?;
            Ok((text, start.elapsed()))
        })?;
        self.parse_reply(&text, request, elapsed)
    }

    fn unload(&self) -> Result<(), BackendError> {
        let Some(path) = &self.config.unload_path else {
            return Ok(());
        };
        let url = self.endpoint(path);
        match self.agent.post(&url).send_string("") {
            Ok(_) => Ok(()),
            Err(e) => match self.classify(e) {
                Failure::Fatal(err) => Err(err),
                Failure::Retryable(message) => Err(BackendError::Transport {
                    backend: self.id.clone(),
                    attempts: 1,
                    message,
                }),
            },
        }
    }
}
