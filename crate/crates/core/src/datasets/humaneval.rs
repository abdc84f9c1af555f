//! HumanEval-shaped code generation suites: one JSON record per line with
//! `task_id`, `prompt`, `canonical_solution`, `test` and `entry_point`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    finalize_tasks, read_file, Area, DatasetAdapter, DatasetEnv, DatasetError, PromptStyle, TaskRecord, TestKind,
    TestSpec, Verdict, DEFAULT_TEST_TIMEOUT,
};
use crate::sandbox::{CommandSpec, SandboxHandle};

const DATA_FILE: &str = "HumanEval.jsonl";
const PROGRAM_FILE: &str = "solution_test.py";

#[derive(Debug, Deserialize)]
struct Problem {
    task_id: String,
    prompt: String,
    #[serde(default)]
    canonical_solution: Option<String>,
    test: String,
    entry_point: String,
}

#[derive(Debug, Clone)]
pub struct HumanEvalAdapter {
    bundled: Option<PathBuf>,
}

impl HumanEvalAdapter {
    pub fn new(bundled: Option<PathBuf>) -> Self {
        Self { bundled }
    }
}

/// Everything in the prompt before the entry point's `def` line: imports and
/// helper functions the answer may rely on without repeating them.
fn preamble<'a>(prompt: &'a str, entry_point: &str) -> &'a str {
    let needle = format!("def {entry_point}(");
    let mut offset = 0;
    let mut cut = None;
    for line in prompt.split_inclusive('\n') {
        if line.trim_start().starts_with(&needle) && !line.starts_with(' ') {
            cut = Some(offset);
        }
        offset += line.len();
    }
    &prompt[..cut.unwrap_or(0)]
}

/// Test program: preamble, candidate code, the dataset's `check`, then a
/// call against the entry point.
pub(crate) fn compose_program(task: &TaskRecord, code: &str) -> String {
    let entry = task.extra.get("entry_point").map(String::as_str).unwrap_or("");
    let test = task.extra.get("test").map(String::as_str).unwrap_or("");
    format!(
        "{}{}\n\n{}\n\ncheck({})\n",
        preamble(&task.description, entry),
        code,
        test.trim_end(),
        entry
    )
}

impl DatasetAdapter for HumanEvalAdapter {
    fn area(&self) -> Area {
        Area::Cg
    }

    fn prompt_style(&self) -> PromptStyle {
        PromptStyle::Generate
    }

    fn default_max_new_tokens(&self) -> u32 {
        400
    }

    fn root_key(&self) -> Option<&str> {
        Some("HUMANEVAL_ROOT")
    }

    fn bundled_root(&self) -> Option<PathBuf> {
        self.bundled.clone()
    }

    fn load_prompts(&self, dataset_id: &str, root: &Path, _env: &DatasetEnv) -> Result<Vec<TaskRecord>, DatasetError> {
        let path = root.join(DATA_FILE);
        let text = read_file(&path)?;
        let mut tasks = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let p: Problem = serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                path: path.clone(),
                reason: format!("line {}: {e}", lineno + 1),
            })?;
            let mut extra = std::collections::BTreeMap::new();
            extra.insert("entry_point".to_string(), p.entry_point.clone());
            extra.insert("test".to_string(), p.test);
            let reference = p.canonical_solution.map(|body| format!("{}{}", p.prompt, body));
            tasks.push(TaskRecord {
                task_id: p.task_id,
                dataset_id: dataset_id.to_string(),
                area: Area::Cg,
                language: "python".into(),
                description: p.prompt,
                source_code: None,
                test_spec: TestSpec {
                    kind: TestKind::UnitSuite,
                    entry: format!("python3 {PROGRAM_FILE}"),
                    timeout: DEFAULT_TEST_TIMEOUT,
                },
                reference_solution: reference,
                extra,
                skip: None,
            });
        }
        finalize_tasks(dataset_id, root, tasks)
    }

    fn test_answer(
        &self,
        task: &TaskRecord,
        code: &str,
        sandbox: &SandboxHandle,
        workspace: &Path,
        _env: &DatasetEnv,
    ) -> Result<Verdict, DatasetError> {
        std::fs::write(workspace.join(PROGRAM_FILE), compose_program(task, code))?;
        let cmd = CommandSpec::new("python3", [PROGRAM_FILE]).with_wall_time(task.test_spec.timeout);
        let outcome = sandbox.run_command(&cmd, workspace)?;
        Ok(Verdict::from_outcome(&outcome))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preamble_keeps_imports_and_helpers() {
        let prompt = "from typing import List\n\ndef helper(x):\n    return x\n\ndef target(a: List[int]) -> int:\n    \"\"\"doc\"\"\"\n";
        assert_eq!(
            preamble(prompt, "target"),
            "from typing import List\n\ndef helper(x):\n    return x\n\n"
        );
        assert_eq!(preamble("def f():\n", "f"), "");
    }
}
