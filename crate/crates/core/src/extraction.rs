//! Code extraction from free-form model responses.
//!
//! The first complete fenced block wins. A fence is a line starting with
//! exactly three backticks (or three tildes), optionally followed by an info
//! string. Without a complete block the whole response is used. The same
//! routine is applied to every model's output.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMethod {
    FencedBlock,
    WholeResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub code: String,
    pub method: ExtractionMethod,
    pub block_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FenceKind {
    Backtick,
    Tilde,
}

/// Returns the fence kind and the remainder of the line after the marker.
fn fence(line: &str) -> Option<(FenceKind, &str)> {
    let (kind, ch) = if line.starts_with("```") {
        (FenceKind::Backtick, '`')
    } else if line.starts_with("~~~") {
        (FenceKind::Tilde, '~')
    } else {
        return None;
    };
    let rest = &line[3..];
    if rest.starts_with(ch) {
        // four or more markers: not a fence under our rules
        return None;
    }
    Some((kind, rest))
}

/// Extracts the code payload from `response`. Never fails.
pub fn extract_code(response: &str) -> ExtractionResult {
    let normalized = response.replace("\r\n", "\n");
    let lines: Vec<&str> = normalized.split('\n').collect();

    let mut open: Option<(FenceKind, usize, &str)> = None;
    for (idx, line) in lines.iter().enumerate() {
        let Some((kind, info)) = fence(line) else {
            continue;
        };
        match open {
            None => open = Some((kind, idx, info)),
            Some((open_kind, start, info_str)) => {
                // a closing fence carries no info string
                if kind == open_kind && info.trim().is_empty() {
                    let mut interior = lines[start + 1..idx].join("\n");
                    let tag = info_str.trim();
                    if tag.is_empty() {
                        interior = strip_language_tag(&interior);
                    }
                    return ExtractionResult {
                        code: interior,
                        method: ExtractionMethod::FencedBlock,
                        block_index: Some(0),
                    };
                }
            }
        }
    }

    ExtractionResult {
        code: normalized,
        method: ExtractionMethod::WholeResponse,
        block_index: None,
    }
}

fn is_language_tag(line: &str) -> bool {
    !line.is_empty()
        && line.len() <= 32
        && line.chars().any(|c| c.is_ascii_alphabetic())
        && line
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '#'))
}

/// Drops a leading bare language identifier line from a block interior.
///
/// Only applies when there is more than one line; a lone `x` line is code,
/// not a tag.
pub fn strip_language_tag(block_interior: &str) -> String {
    match block_interior.split_once('\n') {
        Some((first, rest)) if is_language_tag(first.trim_end()) => rest.to_string(),
        _ => block_interior.to_string(),
    }
}
