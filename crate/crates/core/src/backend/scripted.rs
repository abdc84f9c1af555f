//! Deterministic scripted backend.
//!
//! Responses are keyed by `(task_id, attempt_index, chain_depth)`; any field
//! may be a wildcard. The most specific match wins, task id first, then
//! chain depth, then attempt index. Unmatched requests get the default text.
//!
//! Fixture document:
//!
//! ```json
//! {
//!   "default": "no answer",
//!   "responses": [
//!     {"task_id": "MiniEval/0", "text": "```python\n...\n```"},
//!     {"task_id": "*", "depth": 1, "text": "..."}
//!   ]
//! }
//! ```

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::tokens::{proxy_token_count, truncate_to_tokens};
use super::{Backend, BackendError, GenerationRequest, GenerationResult};

pub const WILDCARD: &str = "*";

const DEFAULT_TOKENS_PER_SECOND: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedResponse {
    #[serde(default = "wildcard")]
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    pub text: String,
}

fn wildcard() -> String {
    WILDCARD.to_string()
}

impl ScriptedResponse {
    fn specificity(&self) -> u8 {
        (u8::from(self.task_id != WILDCARD) << 2)
            | (u8::from(self.depth.is_some()) << 1)
            | u8::from(self.attempt.is_some())
    }

    fn matches(&self, task_id: &str, attempt: u32, depth: u32) -> bool {
        (self.task_id == WILDCARD || self.task_id == task_id)
            && self.attempt.is_none_or(|a| a == attempt)
            && self.depth.is_none_or(|d| d == depth)
    }

    fn same_key(&self, other: &ScriptedResponse) -> bool {
        self.task_id == other.task_id && self.attempt == other.attempt && self.depth == other.depth
    }
}

/// Response table plus default. Lookup is total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedBehavior {
    #[serde(default)]
    pub default: String,
    #[serde(default)]
    pub responses: Vec<ScriptedResponse>,
    /// Synthetic decode speed used to derive elapsed time.
    #[serde(default = "default_tps")]
    pub tokens_per_second: f64,
}

fn default_tps() -> f64 {
    DEFAULT_TOKENS_PER_SECOND
}

impl ScriptedBehavior {
    pub fn new(default: impl Into<String>) -> Self {
        Self {
            default: default.into(),
            responses: Vec::new(),
            tokens_per_second: DEFAULT_TOKENS_PER_SECOND,
        }
    }

    /// Adds a response; `None` for attempt or depth matches any value.
    /// A later entry with the same key replaces the earlier one.
    pub fn respond(
        mut self,
        task_id: impl Into<String>,
        attempt: Option<u32>,
        depth: Option<u32>,
        text: impl Into<String>,
    ) -> Self {
        let entry = ScriptedResponse {
            task_id: task_id.into(),
            attempt,
            depth,
            text: text.into(),
        };
        self.responses.retain(|r| !r.same_key(&entry));
        self.responses.push(entry);
        self
    }

    pub fn with_tokens_per_second(mut self, tps: f64) -> Self {
        self.tokens_per_second = tps;
        self
    }

    pub fn from_document(text: &str) -> Result<Self, BackendError> {
        let behavior: Self = serde_json::from_str(text).map_err(|e| BackendError::Document(e.to_string()))?;
        behavior.validate()?;
        Ok(behavior)
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| BackendError::Document(format!("{}: {e}", path.display())))?;
        Self::from_document(&text)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.tokens_per_second.is_finite() && self.tokens_per_second > 0.0) {
            return Err(BackendError::Document("tokens_per_second must be positive".into()));
        }
        for (i, a) in self.responses.iter().enumerate() {
            if self.responses[i + 1..].iter().any(|b| a.same_key(b)) {
                return Err(BackendError::Document(format!(
                    "duplicate response key ({}, {:?}, {:?})",
                    a.task_id, a.attempt, a.depth
                )));
            }
        }
        Ok(())
    }

    pub fn lookup(&self, task_id: &str, attempt: u32, depth: u32) -> &str {
        self.responses
            .iter()
            .filter(|r| r.matches(task_id, attempt, depth))
            .max_by_key(|r| r.specificity())
            .map_or(self.default.as_str(), |r| r.text.as_str())
    }
}

/// Backend answering from a [`ScriptedBehavior`]. Output depends only on the
/// request context, never on the prompt or sampling parameters; elapsed time
/// is synthetic so result files are reproducible.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    id: String,
    behavior: ScriptedBehavior,
}

impl ScriptedBackend {
    pub fn new(id: impl Into<String>, behavior: ScriptedBehavior) -> Self {
        Self {
            id: id.into(),
            behavior,
        }
    }

    pub fn behavior(&self) -> &ScriptedBehavior {
        &self.behavior
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<GenerationResult, BackendError> {
        request.validate()?;
        let ctx = request.context;
        let full = self.behavior.lookup(&ctx.task_id, ctx.attempt_index, ctx.chain_depth);
        let text = truncate_to_tokens(full, u64::from(request.params.max_new_tokens));
        let completion_tokens = proxy_token_count(text);
        let elapsed = Duration::from_secs_f64(completion_tokens.max(1) as f64 / self.behavior.tokens_per_second);
        Ok(GenerationResult {
            text: text.to_string(),
            prompt_tokens: proxy_token_count(request.prompt),
            completion_tokens,
            elapsed,
            estimated: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{GenerationParams, RequestContext};

    fn gen(b: &ScriptedBackend, task: &str, attempt: u32, depth: u32, params: &GenerationParams) -> GenerationResult {
        let ctx = RequestContext {
            task_id: task.into(),
            attempt_index: attempt,
            chain_depth: depth,
        };
        b.generate(&GenerationRequest {
            prompt: "p",
            params,
            context: &ctx,
        })
        .unwrap()
    }

    #[test]
    fn scripted_identity() {
        let b = ScriptedBackend::new(
            "stub",
            ScriptedBehavior::new("none").respond("t1", Some(0), Some(0), "```\nx=1\n```"),
        );
        let p = GenerationParams::default();
        assert_eq!(gen(&b, "t1", 0, 0, &p).text, "```\nx=1\n```");
        assert_eq!(gen(&b, "t2", 0, 0, &p).text, "none");
    }

    #[test]
    fn most_specific_wins() {
        let behavior = ScriptedBehavior::new("default")
            .respond("*", None, None, "any")
            .respond("*", None, Some(1), "any-depth1")
            .respond("t", None, None, "t-any")
            .respond("t", Some(2), None, "t-attempt2")
            .respond("t", None, Some(1), "t-depth1")
            .respond("t", Some(2), Some(1), "t-2-1");
        assert_eq!(behavior.lookup("t", 2, 1), "t-2-1");
        assert_eq!(behavior.lookup("t", 0, 1), "t-depth1");
        assert_eq!(behavior.lookup("t", 2, 0), "t-attempt2");
        assert_eq!(behavior.lookup("t", 0, 0), "t-any");
        assert_eq!(behavior.lookup("u", 0, 1), "any-depth1");
        assert_eq!(behavior.lookup("u", 0, 0), "any");
        assert_eq!(ScriptedBehavior::new("d").lookup("x", 9, 9), "d");
    }

    #[test]
    fn greedy_is_repeatable_and_sampling_ignored() {
        let b = ScriptedBackend::new("stub", ScriptedBehavior::new("x = 1"));
        let greedy = GenerationParams::default();
        let sampled = GenerationParams {
            do_sample: true,
            seed: Some(7),
            temperature: 1.3,
            ..Default::default()
        };
        let a = gen(&b, "t", 0, 0, &greedy);
        assert_eq!(a, gen(&b, "t", 0, 0, &greedy));
        assert_eq!(a.text, gen(&b, "t", 0, 0, &sampled).text);
    }

    #[test]
    fn truncates_and_accounts() {
        let b = ScriptedBackend::new("stub", ScriptedBehavior::new("a b c d e f").with_tokens_per_second(2.0));
        let p = GenerationParams {
            max_new_tokens: 4,
            ..Default::default()
        };
        let r = gen(&b, "t", 0, 0, &p);
        assert_eq!(r.text, "a b c d");
        assert_eq!(r.completion_tokens, 4);
        assert_eq!(r.elapsed, Duration::from_secs(2));
        assert_eq!(r.prompt_tokens, 1);
    }

    #[test]
    fn document_round_trip() {
        let doc = r#"{"default": "d", "responses": [{"task_id": "t", "depth": 1, "text": "fix"}]}"#;
        let b = ScriptedBehavior::from_document(doc).unwrap();
        assert_eq!(b.lookup("t", 3, 1), "fix");
        let again = ScriptedBehavior::from_document(&serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(b, again);
        let dup = r#"{"responses": [{"task_id": "t", "text": "a"}, {"task_id": "t", "text": "b"}]}"#;
        assert!(ScriptedBehavior::from_document(dup).is_err());
        assert!(ScriptedBehavior::from_document(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn empty_prompt_rejected() {
        let b = ScriptedBackend::new("stub", ScriptedBehavior::new("x"));
        let ctx = RequestContext {
            task_id: "t".into(),
            attempt_index: 0,
            chain_depth: 0,
        };
        let p = GenerationParams::default();
        let err = b.generate(&GenerationRequest {
            prompt: "",
            params: &p,
            context: &ctx,
        });
        assert!(matches!(err, Err(BackendError::InvalidRequest(_))));
    }
}
