//! SecurityEval-shaped suites: `dataset.jsonl` with `ID`, `Prompt` and
//! `Insecure_code` per line. Answers pass when the analyzer reports nothing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    finalize_tasks, read_file, Area, DatasetAdapter, DatasetEnv, DatasetError, PromptStyle, TaskRecord, TestKind,
    TestSpec, Verdict, DEFAULT_TEST_TIMEOUT,
};
use crate::analyzers::BUILTIN_ANALYZER_ID;
use crate::sandbox::SandboxHandle;

const DATA_FILE: &str = "dataset.jsonl";

#[derive(Debug, Deserialize)]
#[serde(rename_all = "PascalCase")]
struct Sample {
    #[serde(rename = "ID")]
    id: String,
    prompt: String,
    #[serde(default, rename = "Insecure_code")]
    insecure_code: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SecurityEvalAdapter {
    bundled: Option<PathBuf>,
    analyzer: String,
}

impl SecurityEvalAdapter {
    pub fn new(bundled: Option<PathBuf>) -> Self {
        Self {
            bundled,
            analyzer: BUILTIN_ANALYZER_ID.to_string(),
        }
    }

    /// Uses a different registered analyzer for verdicts.
    pub fn with_analyzer(mut self, analyzer_id: impl Into<String>) -> Self {
        self.analyzer = analyzer_id.into();
        self
    }
}

impl DatasetAdapter for SecurityEvalAdapter {
    fn area(&self) -> Area {
        Area::Sc
    }

    fn prompt_style(&self) -> PromptStyle {
        PromptStyle::Generate
    }

    fn default_max_new_tokens(&self) -> u32 {
        400
    }

    fn root_key(&self) -> Option<&str> {
        Some("SECURITYEVAL_ROOT")
    }

    fn bundled_root(&self) -> Option<PathBuf> {
        self.bundled.clone()
    }

    fn analyzer_id(&self) -> Option<&str> {
        Some(&self.analyzer)
    }

    fn load_prompts(&self, dataset_id: &str, root: &Path, _env: &DatasetEnv) -> Result<Vec<TaskRecord>, DatasetError> {
        let path = root.join(DATA_FILE);
        let text = read_file(&path)?;
        let mut tasks = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let s: Sample = serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                path: path.clone(),
                reason: format!("line {}: {e}", lineno + 1),
            })?;
            let mut extra = BTreeMap::new();
            if let Some(code) = s.insecure_code {
                extra.insert("insecure_code".to_string(), code);
            }
            if let Some(cwe) = s.id.split('_').next().filter(|p| p.starts_with("CWE-")) {
                extra.insert("cwe".to_string(), cwe.to_string());
            }
            tasks.push(TaskRecord {
                task_id: s.id,
                dataset_id: dataset_id.to_string(),
                area: Area::Sc,
                language: "python".into(),
                description: s.prompt,
                source_code: None,
                test_spec: TestSpec {
                    kind: TestKind::AnalyzerScan,
                    entry: self.analyzer.clone(),
                    timeout: DEFAULT_TEST_TIMEOUT,
                },
                reference_solution: None,
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
        let findings = sandbox.run_analyzer(&task.test_spec.entry, code, workspace)?;
        Ok(Verdict::from_findings(findings))
    }
}
