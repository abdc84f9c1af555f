//! Chat templates: render role-tagged messages into the prompt text a model
//! family expects.
//!
//! Templates are plain affix tables. Whitespace in affixes is significant and
//! copied verbatim. The llama2 template emits `<s>` as literal text; whether a
//! serving stack adds its own BOS token is backend dependent.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("template `{0}` is already registered")]
    Duplicate(String),
    #[error("template definition is missing directive `{0}`")]
    MissingDirective(String),
    #[error("malformed template definition: {0}")]
    Malformed(String),
    #[error("role sequence violation at message {index}: {reason}")]
    RoleSequence { index: usize, reason: String },
    #[error("template `{0}` defines no infilling markers")]
    NoInfilling(String),
    #[error("failed to read template file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Prefix/suffix/middle markers for code infilling prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfillMarkers {
    pub prefix: String,
    pub suffix: String,
    pub middle: String,
}

/// A template definition document. Every role affix must be present, even
/// when empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatTemplate {
    pub id: String,
    pub system_prefix: String,
    pub system_suffix: String,
    pub user_prefix: String,
    pub user_suffix: String,
    pub assistant_prefix: String,
    pub assistant_suffix: String,
    /// Replaces `user_prefix` for a user message that directly follows the
    /// system message (llama2 opens `[INST]` inside the system block).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_prefix_after_system: Option<String>,
    /// Emitted before every user turn that follows an assistant turn.
    #[serde(default)]
    pub turn_separator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infilling: Option<InfillMarkers>,
}

const REQUIRED_DIRECTIVES: [&str; 7] = [
    "id",
    "system_prefix",
    "system_suffix",
    "user_prefix",
    "user_suffix",
    "assistant_prefix",
    "assistant_suffix",
];

fn check_sequence(messages: &[Message]) -> Result<(), TemplateError> {
    let body = match messages.first() {
        Some(m) if m.role == Role::System => &messages[1..],
        _ => messages,
    };
    if body.is_empty() {
        return Err(TemplateError::RoleSequence {
            index: messages.len(),
            reason: "no user message".into(),
        });
    }
    let offset = messages.len() - body.len();
    for (i, msg) in body.iter().enumerate() {
        let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
        if msg.role != expected {
            return Err(TemplateError::RoleSequence {
                index: i + offset,
                reason: format!("expected {expected}, found {}", msg.role),
            });
        }
    }
    for (index, msg) in messages.iter().enumerate() {
        if msg.role != Role::Assistant && msg.content.is_empty() {
            return Err(TemplateError::RoleSequence {
                index,
                reason: format!("empty {} content", msg.role),
            });
        }
    }
    Ok(())
}

impl ChatTemplate {
    /// Renders a conversation. Messages may open with one system message,
    /// then must alternate user/assistant starting with user.
    pub fn render(&self, messages: &[Message]) -> Result<String, TemplateError> {
        check_sequence(messages)?;
        let mut out = String::new();
        let mut prev: Option<Role> = None;
        for msg in messages {
            match msg.role {
                Role::System => {
                    out.push_str(&self.system_prefix);
                    out.push_str(&msg.content);
                    out.push_str(&self.system_suffix);
                }
                Role::User => {
                    match prev {
                        Some(Role::System) => {
                            out.push_str(self.user_prefix_after_system.as_deref().unwrap_or(&self.user_prefix))
                        }
                        Some(Role::Assistant) => {
                            out.push_str(&self.turn_separator);
                            out.push_str(&self.user_prefix);
                        }
                        _ => out.push_str(&self.user_prefix),
                    }
                    out.push_str(&msg.content);
                    out.push_str(&self.user_suffix);
                }
                Role::Assistant => {
                    out.push_str(&self.assistant_prefix);
                    out.push_str(&msg.content);
                    out.push_str(&self.assistant_suffix);
                }
            }
            prev = Some(msg.role);
        }
        Ok(out)
    }

    /// Builds an infilling prompt; no chat framing is applied.
    pub fn render_infill(&self, prefix: &str, suffix: &str) -> Result<String, TemplateError> {
        let m = self
            .infilling
            .as_ref()
            .ok_or_else(|| TemplateError::NoInfilling(self.id.clone()))?;
        Ok(format!("{}{prefix}{}{suffix}{}", m.prefix, m.suffix, m.middle))
    }

    /// Parses a template definition document (JSON).
    pub fn from_document(text: &str) -> Result<Self, TemplateError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| TemplateError::Malformed(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| TemplateError::Malformed("expected an object".into()))?;
        for key in REQUIRED_DIRECTIVES {
            if !obj.contains_key(key) {
                return Err(TemplateError::MissingDirective(key.to_string()));
            }
        }
        let template: ChatTemplate =
            serde_json::from_value(value).map_err(|e| TemplateError::Malformed(e.to_string()))?;
        if template.id.trim().is_empty() {
            return Err(TemplateError::MissingDirective("id".into()));
        }
        Ok(template)
    }
}

pub fn llama2() -> ChatTemplate {
    ChatTemplate {
        id: "llama2".into(),
        system_prefix: "<s> [INST] <<SYS>>\n".into(),
        system_suffix: "\n<</SYS>>\n\n".into(),
        user_prefix: "<s> [INST] ".into(),
        user_suffix: " [/INST]".into(),
        assistant_prefix: " ".into(),
        assistant_suffix: " </s>".into(),
        user_prefix_after_system: Some(String::new()),
        turn_separator: String::new(),
        infilling: Some(InfillMarkers {
            prefix: "<PRE> ".into(),
            suffix: " <SUF>".into(),
            middle: " <MID>".into(),
        }),
    }
}

pub fn deepseek() -> ChatTemplate {
    ChatTemplate {
        id: "deepseek".into(),
        system_prefix: String::new(),
        system_suffix: "\n".into(),
        user_prefix: "### Instruction:\n".into(),
        user_suffix: String::new(),
        assistant_prefix: "\n### Response:\n".into(),
        assistant_suffix: "\n<|EOT|>\n".into(),
        user_prefix_after_system: None,
        turn_separator: String::new(),
        infilling: Some(InfillMarkers {
            prefix: "<｜fim▁begin｜>".into(),
            suffix: "<｜fim▁hole｜>".into(),
            middle: "<｜fim▁end｜>".into(),
        }),
    }
}

pub fn llama3() -> ChatTemplate {
    ChatTemplate {
        id: "llama3".into(),
        system_prefix: "<|begin_of_text|><|start_header_id|>system<|end_header_id|>\n\n".into(),
        system_suffix: "<|eot_id|>".into(),
        user_prefix: "<|start_header_id|>user<|end_header_id|>\n\n".into(),
        user_suffix: "<|eot_id|><|start_header_id|>assistant<|end_header_id|>\n\n".into(),
        assistant_prefix: String::new(),
        assistant_suffix: "<|eot_id|>".into(),
        user_prefix_after_system: None,
        turn_separator: String::new(),
        infilling: None,
    }
}

/// Identity framing: contents concatenated, single user message unchanged.
pub fn raw() -> ChatTemplate {
    ChatTemplate {
        id: "raw".into(),
        system_prefix: String::new(),
        system_suffix: "\n".into(),
        user_prefix: String::new(),
        user_suffix: String::new(),
        assistant_prefix: "\n".into(),
        assistant_suffix: "\n".into(),
        user_prefix_after_system: None,
        turn_separator: String::new(),
        infilling: Some(InfillMarkers {
            prefix: String::new(),
            suffix: String::new(),
            middle: String::new(),
        }),
    }
}

/// Templates resolvable by id. Populated at startup, read-only afterwards.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, ChatTemplate>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl TemplateRegistry {
    pub fn empty() -> Self {
        Self {
            templates: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        for t in [llama2(), deepseek(), llama3(), raw()] {
            reg.templates.insert(t.id.clone(), t);
        }
        reg
    }

    pub fn register(&mut self, template: ChatTemplate) -> Result<&ChatTemplate, TemplateError> {
        if self.templates.contains_key(&template.id) {
            return Err(TemplateError::Duplicate(template.id));
        }
        let id = template.id.clone();
        Ok(self.templates.entry(id).or_insert(template))
    }

    /// Parses and registers a definition document.
    pub fn register_document(&mut self, text: &str) -> Result<&ChatTemplate, TemplateError> {
        self.register(ChatTemplate::from_document(text)?)
    }

    /// Registers every definition in a JSON array file.
    pub fn register_file(&mut self, path: &Path) -> Result<Vec<String>, TemplateError> {
        let text = std::fs::read_to_string(path)?;
        let docs: Vec<serde_json::Value> =
            serde_json::from_str(&text).map_err(|e| TemplateError::Malformed(e.to_string()))?;
        let mut ids = Vec::new();
        for doc in docs {
            ids.push(self.register_document(&doc.to_string())?.id.clone());
        }
        Ok(ids)
    }

    pub fn get(&self, id: &str) -> Result<&ChatTemplate, TemplateError> {
        self.templates
            .get(id)
            .ok_or_else(|| TemplateError::Unknown(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.templates.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}
