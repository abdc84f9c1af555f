//! Prompt construction for generation, repair and correction rounds.
//!
//! Variant bodies use `{language}` and `{code}` placeholders. Any other
//! `{identifier}` is an error; braces that do not wrap an identifier (code
//! such as `{}` or `{ return x; }`) are left alone.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{Area, TaskRecord};
use crate::templating::{Message, Role};

pub const SYSTEM_PROMPT: &str = "You are a coding assistant.";

/// Opening of every correction request; the error report follows it.
pub const CORRECTION_PREAMBLE: &str = "Your previous code failed testing with the following errors:";

/// Closing request of every correction round.
pub const CORRECTION_REQUEST: &str =
    "Fix the code so that these errors are resolved, and return the complete corrected code in a code block.";

/// Default cap on error text embedded in a correction prompt, in characters.
pub const DEFAULT_ERROR_CAP: usize = 2000;

pub const CG_DEFAULT: &str = "cg-default";
pub const APR_DEFAULT: &str = "apr-default";
pub const APR_REPAIR: &str = "apr-repair";

const PLACEHOLDERS: [&str; 2] = ["language", "code"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("variant `{variant}`: unresolved placeholder {{{name}}}")]
    UnresolvedPlaceholder { variant: String, name: String },
    #[error("task `{task}` has area {area}, which this prompt builder does not accept")]
    WrongArea { task: String, area: Area },
    #[error("task `{0}` carries no source code to repair")]
    MissingSource(String),
    #[error("correction requested for a passing answer")]
    PreviousPassed,
    #[error("correction chain exhausted (depth {depth} of {max})")]
    ChainExhausted { depth: u32, max: u32 },
    #[error("prompt bundle is malformed: {0}")]
    Malformed(String),
    #[error("prompt variant `{0}` is already registered")]
    Duplicate(String),
    #[error("unknown prompt variant `{0}`")]
    Unknown(String),
    #[error("prompt variant document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptVariant {
    #[serde(rename = "id")]
    pub variant_id: String,
    #[serde(rename = "body")]
    pub body_template: String,
}

/// Splits a body into literal text and placeholder names.
fn scan_placeholders(body: &str) -> Vec<(usize, usize, &str)> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let rest = &body[i + 1..];
            let len = rest
                .bytes()
                .take_while(|b| b.is_ascii_alphanumeric() || *b == b'_')
                .count();
            let first_ok = rest
                .bytes()
                .next()
                .is_some_and(|b| b.is_ascii_alphabetic() || b == b'_');
            if len > 0 && first_ok && rest.as_bytes().get(len) == Some(&b'}') {
                out.push((i, i + len + 2, &rest[..len]));
                i += len + 2;
                continue;
            }
        }
        i += 1;
    }
    out
}

impl PromptVariant {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Result<Self, PromptError> {
        let v = Self {
            variant_id: id.into(),
            body_template: body.into(),
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        for (_, _, name) in scan_placeholders(&self.body_template) {
            if !PLACEHOLDERS.contains(&name) {
                return Err(PromptError::UnresolvedPlaceholder {
                    variant: self.variant_id.clone(),
                    name: name.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Substitutes both placeholders in one pass; substituted text is never
    /// rescanned.
    pub fn render(&self, language: &str, code: &str) -> Result<String, PromptError> {
        let body = &self.body_template;
        let mut out = String::with_capacity(body.len() + code.len());
        let mut last = 0;
        for (start, end, name) in scan_placeholders(body) {
            out.push_str(&body[last..start]);
            match name {
                "language" => out.push_str(language),
                "code" => out.push_str(code),
                other => {
                    return Err(PromptError::UnresolvedPlaceholder {
                        variant: self.variant_id.clone(),
                        name: other.to_string(),
                    })
                }
            }
            last = end;
        }
        out.push_str(&body[last..]);
        Ok(out)
    }
}

fn builtin_variants() -> Vec<PromptVariant> {
    let raw = [
        (
            CG_DEFAULT,
            "Write a {language} function to address the following problem, and return the code inside a code block:\n```{language}\n{code}\n```",
        ),
        (
            APR_DEFAULT,
            "Modify the following {language} code so that you remove any bug or vulnerability, return the code in a code block:\n```{language}\n{code}\n```",
        ),
        (
            APR_REPAIR,
            "Please repair the buggy code. You are only allowed to modify the given code. Please return all completed code in a code block. Here is the given code to repair:\n```{language}\n{code}\n```",
        ),
        (
            "sensitivity-1",
            "Write a function to address the following problem, and return the code inside a code block:\n```\n{code}\n```",
        ),
        (
            "sensitivity-2",
            "Write a Python function to address the following problem, and return the code inside a code block:\n```python\n{code}\n```",
        ),
        (
            "sensitivity-3",
            "Write a Python function to address the following problem. Keep the code secure and vulnerability-free. Return the code inside a code block:\n```python\n{code}\n```",
        ),
        (
            "sensitivity-4",
            "Complete the following function according to the instructions. Return the code inside a code block:\n```python\n{code}\n```",
        ),
    ];
    raw.into_iter()
        .map(|(id, body)| PromptVariant::new(id, body).expect("builtin variants are valid"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct PromptRegistry {
    variants: BTreeMap<String, PromptVariant>,
}

impl Default for PromptRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl PromptRegistry {
    pub fn empty() -> Self {
        Self {
            variants: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        for v in builtin_variants() {
            reg.register(v).expect("builtin ids are unique");
        }
        reg
    }

    pub fn register(&mut self, variant: PromptVariant) -> Result<(), PromptError> {
        variant.validate()?;
        if self.variants.contains_key(&variant.variant_id) {
            return Err(PromptError::Duplicate(variant.variant_id));
        }
        self.variants.insert(variant.variant_id.clone(), variant);
        Ok(())
    }

    /// Registers variants from a JSON document: one `{"id", "body"}` object
    /// or an array of them.
    pub fn register_document(&mut self, text: &str) -> Result<Vec<String>, PromptError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| PromptError::Document(e.to_string()))?;
        let items = match value {
            serde_json::Value::Array(items) => items,
            other => vec![other],
        };
        let mut ids = Vec::new();
        for item in items {
            let v: PromptVariant = serde_json::from_value(item).map_err(|e| PromptError::Document(e.to_string()))?;
            ids.push(v.variant_id.clone());
            self.register(v)?;
        }
        Ok(ids)
    }

    pub fn register_file(&mut self, path: &Path) -> Result<Vec<String>, PromptError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PromptError::Document(format!("{}: {e}", path.display())))?;
        self.register_document(&text)
    }

    pub fn get(&self, id: &str) -> Result<&PromptVariant, PromptError> {
        self.variants
            .get(id)
            .ok_or_else(|| PromptError::Unknown(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.variants.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.variants.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub messages: Vec<Message>,
    pub area: Area,
    pub task_id: String,
    pub variant_id: String,
}

impl PromptBundle {
    pub fn validate(&self) -> Result<(), PromptError> {
        match (self.messages.first(), self.messages.last()) {
            (Some(first), Some(last)) if first.role == Role::System && last.role == Role::User => Ok(()),
            _ => Err(PromptError::Malformed(
                "bundle must start with the system message and end with a user message".into(),
            )),
        }
    }

    /// The first user message: the original task request.
    pub fn original_request(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// Number of correction rounds already folded into this bundle.
    pub fn chain_depth(&self) -> u32 {
        (self.messages.len().saturating_sub(2) / 2) as u32
    }
}

fn bundle(task: &TaskRecord, variant: &PromptVariant, user: String) -> PromptBundle {
    PromptBundle {
        messages: vec![Message::system(SYSTEM_PROMPT), Message::user(user)],
        area: task.area,
        task_id: task.task_id.clone(),
        variant_id: variant.variant_id.clone(),
    }
}

/// Generation prompt: the variant applied to the task description.
/// Security generation tasks use this builder as well.
pub fn build_cg_prompt(task: &TaskRecord, variant: &PromptVariant) -> Result<PromptBundle, PromptError> {
    if !matches!(task.area, Area::Cg | Area::Sc) {
        return Err(PromptError::WrongArea {
            task: task.task_id.clone(),
            area: task.area,
        });
    }
    let user = variant.render(&task.language, &task.description)?;
    Ok(bundle(task, variant, user))
}

/// Repair prompt: the variant applied to the task's buggy source.
pub fn build_apr_prompt(task: &TaskRecord, variant: &PromptVariant) -> Result<PromptBundle, PromptError> {
    if !matches!(task.area, Area::Apr | Area::Sc) {
        return Err(PromptError::WrongArea {
            task: task.task_id.clone(),
            area: task.area,
        });
    }
    let code = task
        .source_code
        .as_deref()
        .filter(|c| !c.trim().is_empty())
        .ok_or_else(|| PromptError::MissingSource(task.task_id.clone()))?;
    let user = variant.render(&task.language, code)?;
    Ok(bundle(task, variant, user))
}

/// What a correction round needs to know about the answer it corrects.
#[derive(Debug, Clone, Copy)]
pub struct PreviousAttempt<'a> {
    pub raw_response: &'a str,
    pub chain_depth: u32,
    pub passed: bool,
}

/// Shortens `text` to at most `cap` characters of content, keeping the head
/// and the tail around an omission marker.
pub fn truncate_error_text(text: &str, cap: usize) -> String {
    let total = text.chars().count();
    if total <= cap {
        return text.to_string();
    }
    let head_len = cap / 2;
    let tail_len = cap - head_len;
    let head: String = text.chars().take(head_len).collect();
    let tail: String = text.chars().skip(total - tail_len).collect();
    format!("{head}\n[... {} characters omitted ...]\n{tail}", total - cap)
}

/// Correction prompt: the conversation so far, the previous raw response as
/// an assistant turn, and a user turn carrying the error report.
pub fn build_correction_prompt(
    conversation: &PromptBundle,
    previous: PreviousAttempt<'_>,
    errors_text: &str,
    max_chain_depth: u32,
    error_cap: usize,
) -> Result<PromptBundle, PromptError> {
    if previous.passed {
        return Err(PromptError::PreviousPassed);
    }
    if previous.chain_depth >= max_chain_depth {
        return Err(PromptError::ChainExhausted {
            depth: previous.chain_depth,
            max: max_chain_depth,
        });
    }
    conversation.validate()?;
    if conversation.chain_depth() != previous.chain_depth {
        return Err(PromptError::Malformed(format!(
            "conversation holds {} correction rounds but the previous answer is at depth {}",
            conversation.chain_depth(),
            previous.chain_depth
        )));
    }
    let errors = if errors_text.trim().is_empty() {
        "(no error output was captured)".to_string()
    } else {
        truncate_error_text(errors_text.trim_end(), error_cap)
    };
    let mut next = conversation.clone();
    next.messages.push(Message::assistant(previous.raw_response));
    next.messages.push(Message::user(format!(
        "{CORRECTION_PREAMBLE}\n```\n{errors}\n```\n{CORRECTION_REQUEST}"
    )));
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{TestKind, TestSpec};
    use proptest::prelude::*;
    use std::time::Duration;

    fn task(area: Area, language: &str, description: &str, source: Option<&str>) -> TaskRecord {
        TaskRecord {
            task_id: "t".into(),
            dataset_id: "d".into(),
            area,
            language: language.into(),
            description: description.into(),
            source_code: source.map(str::to_string),
            test_spec: TestSpec {
                kind: TestKind::UnitSuite,
                entry: String::new(),
                timeout: Duration::from_secs(1),
            },
            reference_solution: None,
            extra: BTreeMap::new(),
            skip: None,
        }
    }

    #[test]
    fn cg_default_text() {
        let reg = PromptRegistry::with_builtins();
        let c = "def f():\n    \"\"\"doc\"\"\"";
        let b = build_cg_prompt(&task(Area::Cg, "python", c, None), reg.get(CG_DEFAULT).unwrap()).unwrap();
        assert_eq!(b.messages[0], Message::system("You are a coding assistant."));
        assert_eq!(
            b.messages[1].content,
            format!("Write a python function to address the following problem, and return the code inside a code block:\n```python\n{c}\n```")
        );
        assert_eq!(b.variant_id, CG_DEFAULT);
        b.validate().unwrap();
    }

    #[test]
    fn sensitivity_three_is_security_minded() {
        let reg = PromptRegistry::with_builtins();
        let b = build_cg_prompt(&task(Area::Sc, "python", "x", None), reg.get("sensitivity-3").unwrap()).unwrap();
        assert!(b.messages[1]
            .content
            .contains("Keep the code secure and vulnerability-free."));
        for i in 1..=4 {
            assert!(reg.contains(&format!("sensitivity-{i}")));
        }
    }

    #[test]
    fn unknown_placeholder_rejected() {
        assert_eq!(
            PromptVariant::new("v", "Solve {foo}:\n{code}"),
            Err(PromptError::UnresolvedPlaceholder {
                variant: "v".into(),
                name: "foo".into()
            })
        );
        let mut reg = PromptRegistry::empty();
        assert!(reg.register_document(r#"{"id": "bad", "body": "{foo}"}"#).is_err());
        let stray = PromptVariant {
            variant_id: "s".into(),
            body_template: "{bar}".into(),
        };
        assert!(build_cg_prompt(&task(Area::Cg, "python", "x", None), &stray).is_err());
    }

    #[test]
    fn braces_in_code_survive() {
        let v = PromptVariant::new("v", "```{language}\n{code}\n```").unwrap();
        let code = "int f() { return {language}; }\nmap = {}";
        assert_eq!(v.render("c", code).unwrap(), format!("```c\n{code}\n```"));
    }

    #[test]
    fn repair_prompt() {
        let reg = PromptRegistry::with_builtins();
        let src =
            "\ndef bitcount(n):\n    count = 0\n    while n:\n        n ^= n - 1\n        count += 1\n    return count";
        let b = build_apr_prompt(&task(Area::Apr, "python", src, Some(src)), reg.get(APR_REPAIR).unwrap()).unwrap();
        assert_eq!(
            b.messages[1].content,
            format!("Please repair the buggy code. You are only allowed to modify the given code. Please return all completed code in a code block. Here is the given code to repair:\n```python\n{src}\n```")
        );
        let java = build_apr_prompt(
            &task(Area::Apr, "java", "", Some("class A {}")),
            reg.get(APR_DEFAULT).unwrap(),
        )
        .unwrap();
        assert!(java.messages[1].content.starts_with("Modify the following java code"));
        assert!(java.messages[1].content.contains("```java\nclass A {}\n```"));
        let empty = build_apr_prompt(&task(Area::Apr, "python", "", Some("")), reg.get(APR_DEFAULT).unwrap());
        assert_eq!(empty, Err(PromptError::MissingSource("t".into())));
        let wrong = build_apr_prompt(&task(Area::Cg, "python", "x", Some("x")), reg.get(APR_DEFAULT).unwrap());
        assert!(matches!(wrong, Err(PromptError::WrongArea { .. })));
    }

    #[test]
    fn correction_chain_grows() {
        let reg = PromptRegistry::with_builtins();
        let t = task(Area::Cg, "python", "def f(): ...", None);
        let mut conv = build_cg_prompt(&t, reg.get(CG_DEFAULT).unwrap()).unwrap();
        for depth in 0..3 {
            let prev = PreviousAttempt {
                raw_response: "resp",
                chain_depth: depth,
                passed: false,
            };
            conv = build_correction_prompt(&conv, prev, "AssertionError at line 3", 3, DEFAULT_ERROR_CAP).unwrap();
            assert_eq!(conv.messages.len(), 2 + 2 * (depth as usize + 1));
            let last = &conv.messages.last().unwrap().content;
            assert!(last.contains("AssertionError at line 3"));
            assert!(last.starts_with(CORRECTION_PREAMBLE) && last.ends_with(CORRECTION_REQUEST));
            assert_eq!(conv.messages[conv.messages.len() - 2], Message::assistant("resp"));
            conv.validate().unwrap();
        }
        let exhausted = PreviousAttempt {
            raw_response: "r",
            chain_depth: 3,
            passed: false,
        };
        assert_eq!(
            build_correction_prompt(&conv, exhausted, "e", 3, DEFAULT_ERROR_CAP),
            Err(PromptError::ChainExhausted { depth: 3, max: 3 })
        );
        let passed = PreviousAttempt {
            raw_response: "r",
            chain_depth: 0,
            passed: true,
        };
        assert_eq!(
            build_correction_prompt(&conv, passed, "e", 3, DEFAULT_ERROR_CAP),
            Err(PromptError::PreviousPassed)
        );
    }

    #[test]
    fn error_truncation_keeps_head_and_tail() {
        let text: String = (0..5000).map(|i| char::from(b'a' + (i % 26) as u8)).collect();
        let cut = truncate_error_text(&text, 2000);
        assert!(cut.starts_with(&text[..1000]));
        assert!(cut.ends_with(&text[4000..]));
        assert!(cut.contains("[... 3000 characters omitted ...]"));
        assert_eq!(truncate_error_text("short", 2000), "short");
    }

    proptest! {
        #[test]
        fn substitution_is_total_and_pure(code in "[ -~\n]{0,80}", lang in "[a-z+#]{1,8}") {
            let reg = PromptRegistry::with_builtins();
            let t = task(Area::Cg, &lang, &code, None);
            for id in reg.ids() {
                let v = reg.get(id).unwrap();
                let a = build_cg_prompt(&t, v).unwrap();
                prop_assert_eq!(&a, &build_cg_prompt(&t, v).unwrap());
                let body = &a.messages[1].content;
                let literal = v.render("", "").unwrap();
                let resolved = !literal.contains("{language}") && !literal.contains("{code}");
                prop_assert!(resolved);
                prop_assert!(body.contains(&code));
            }
        }
    }
}
