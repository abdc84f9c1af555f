//! Generic compile-then-test repair suites, one directory per task.
//!
//! ```text
//! <root>/tasks/<id>/task.json
//! <root>/tasks/<id>/...            copied into the workspace as-is
//! ```
//!
//! `task.json` names the buggy file (replaced by the candidate), an optional
//! compile command, the test command, and required programs. A compile
//! failure is a failed verdict with detail `compile`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    finalize_tasks, read_file, Area, DatasetAdapter, DatasetEnv, DatasetError, PromptStyle, TaskRecord, TestKind,
    TestSpec, Verdict, DEFAULT_TEST_TIMEOUT,
};
use crate::sandbox::{CommandSpec, SandboxHandle};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    id: String,
    language: String,
    buggy_file: String,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    compile: Vec<String>,
    test: Vec<String>,
    #[serde(default)]
    requires: Vec<String>,
    /// `paths` keys whose `<home>/bin` may provide required programs.
    #[serde(default)]
    toolchain_homes: Vec<String>,
    #[serde(default)]
    cwe: Option<String>,
    #[serde(default)]
    fixed_file: Option<String>,
    #[serde(default)]
    timeout_secs: Option<u64>,
    #[serde(default)]
    skip: Option<String>,
}

/// Static properties of a task-directory dataset.
#[derive(Debug, Clone)]
pub struct TaskDirSpec {
    pub area: Area,
    pub style: PromptStyle,
    pub max_new_tokens: u32,
    pub root_key: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TaskDirAdapter {
    spec: TaskDirSpec,
    bundled: Option<PathBuf>,
}

impl TaskDirAdapter {
    pub fn new(spec: TaskDirSpec, bundled: Option<PathBuf>) -> Self {
        Self { spec, bundled }
    }

    /// Java vulnerability repair (Vul4J/VJBench-shaped), 2000-token budget.
    pub fn llm_vul(bundled: Option<PathBuf>) -> Self {
        Self::new(
            TaskDirSpec {
                area: Area::Sc,
                style: PromptStyle::Repair,
                max_new_tokens: 2000,
                root_key: Some("VUL4J_ROOT".into()),
            },
            bundled,
        )
    }
}

fn copy_dir(src: &Path, dst: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dst)?;
    for entry in std::fs::read_dir(src)? {
        let entry = entry?;
        let target = dst.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_dir(&entry.path(), &target)?;
        } else {
            std::fs::copy(entry.path(), target)?;
        }
    }
    Ok(())
}

fn resolve_command(argv: &[String], env: &DatasetEnv, homes: &[&str], timeout: Duration) -> Option<CommandSpec> {
    let (program, args) = argv.split_first()?;
    let program = env
        .find_program(program, homes)
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| program.clone());
    Some(CommandSpec::new(program, args.iter().cloned()).with_wall_time(timeout))
}

impl DatasetAdapter for TaskDirAdapter {
    fn area(&self) -> Area {
        self.spec.area
    }

    fn prompt_style(&self) -> PromptStyle {
        self.spec.style
    }

    fn default_max_new_tokens(&self) -> u32 {
        self.spec.max_new_tokens
    }

    fn root_key(&self) -> Option<&str> {
        self.spec.root_key.as_deref()
    }

    fn bundled_root(&self) -> Option<PathBuf> {
        self.bundled.clone()
    }

    fn load_prompts(&self, dataset_id: &str, root: &Path, env: &DatasetEnv) -> Result<Vec<TaskRecord>, DatasetError> {
        let tasks_dir = root.join("tasks");
        if !tasks_dir.is_dir() {
            return Err(DatasetError::Missing(tasks_dir));
        }
        let mut tasks = Vec::new();
        for entry in std::fs::read_dir(&tasks_dir)? {
            let dir = entry?.path();
            let meta_path = dir.join("task.json");
            if !meta_path.is_file() {
                continue;
            }
            let meta: TaskFile =
                serde_json::from_str(&read_file(&meta_path)?).map_err(|e| DatasetError::Malformed {
                    path: meta_path.clone(),
                    reason: e.to_string(),
                })?;
            if meta.test.is_empty() {
                return Err(DatasetError::InvalidTask {
                    task: meta.id,
                    reason: "empty test command".into(),
                });
            }
            let source = read_file(&dir.join(&meta.buggy_file))?;
            let reference = match &meta.fixed_file {
                Some(f) => Some(read_file(&dir.join(f))?),
                None => None,
            };
            let homes: Vec<&str> = meta.toolchain_homes.iter().map(String::as_str).collect();
            let missing: Vec<&str> = meta
                .requires
                .iter()
                .map(String::as_str)
                .filter(|p| env.find_program(p, &homes).is_none())
                .collect();
            let skip = meta.skip.clone().or_else(|| {
                (!missing.is_empty()).then(|| format!("required programs not found: {}", missing.join(", ")))
            });
            let mut extra = BTreeMap::new();
            extra.insert("task_dir".to_string(), dir.display().to_string());
            extra.insert(
                "task_json".to_string(),
                serde_json::to_string(&meta).expect("task file serializes"),
            );
            if let Some(cwe) = &meta.cwe {
                extra.insert("cwe".to_string(), cwe.clone());
            }
            tasks.push(TaskRecord {
                task_id: meta.id.clone(),
                dataset_id: dataset_id.to_string(),
                area: self.spec.area,
                language: meta.language.clone(),
                description: meta.description.clone().unwrap_or_else(|| source.clone()),
                source_code: Some(source),
                test_spec: TestSpec {
                    kind: TestKind::UnitSuite,
                    entry: meta.test.join(" "),
                    timeout: meta
                        .timeout_secs
                        .map(Duration::from_secs)
                        .unwrap_or(DEFAULT_TEST_TIMEOUT),
                },
                reference_solution: reference,
                extra,
                skip,
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
        env: &DatasetEnv,
    ) -> Result<Verdict, DatasetError> {
        let invalid = |reason: &str| DatasetError::InvalidTask {
            task: task.task_id.clone(),
            reason: reason.to_string(),
        };
        let meta: TaskFile = task
            .extra
            .get("task_json")
            .and_then(|j| serde_json::from_str(j).ok())
            .ok_or_else(|| invalid("task metadata missing"))?;
        let dir = task
            .extra
            .get("task_dir")
            .ok_or_else(|| invalid("task directory missing"))?;
        copy_dir(Path::new(dir), workspace)?;
        let target = workspace.join(&meta.buggy_file);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&target, code)?;

        let homes: Vec<&str> = meta.toolchain_homes.iter().map(String::as_str).collect();
        let timeout = task.test_spec.timeout;
        if let Some(compile) = resolve_command(&meta.compile, env, &homes, timeout) {
            let outcome = sandbox.run_command(&compile, workspace)?;
            if !outcome.success() {
                return Ok(Verdict::compile_failure(&outcome));
            }
        }
        let test = resolve_command(&meta.test, env, &homes, timeout).ok_or_else(|| invalid("empty test command"))?;
        let outcome = sandbox.run_command(&test, workspace)?;
        Ok(Verdict::from_outcome(&outcome))
    }
}
