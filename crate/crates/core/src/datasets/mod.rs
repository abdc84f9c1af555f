//! Dataset adapters: loading task prompts and testing extracted answers.
//!
//! Each adapter understands one on-disk layout. Bundled mini-suites live
//! under `data/suites/` in the same formats as the full third-party datasets,
//! so pointing an adapter at a full checkout works without code changes.

mod humaneval;
mod quixbugs;
mod securityeval;
mod taskdir;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzers::Finding;
use crate::sandbox::{ExecOutcome, SandboxError, SandboxHandle};

pub use humaneval::HumanEvalAdapter;
pub use quixbugs::{relocate_trailing_docstring, QuixBugsAdapter, QuixLanguage};
pub use securityeval::SecurityEvalAdapter;
pub use taskdir::{TaskDirAdapter, TaskDirSpec};

pub const HUMANEVAL: &str = "HumanEval";
pub const QUIXBUGS_PYTHON: &str = "QuixBugs-python";
pub const QUIXBUGS_JAVA: &str = "QuixBugs-java";
pub const SECURITYEVAL: &str = "SecurityEval";
pub const LLMVUL: &str = "LlmVul";

/// Default per-execution timeout for unit suites.
pub const DEFAULT_TEST_TIMEOUT: Duration = Duration::from_secs(60);

/// Marker line printed by bundled drivers: `RESULT passed=<n> failed=<m>`.
pub const RESULT_MARKER: &str = "RESULT";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset `{0}` is already registered")]
    Duplicate(String),
    #[error("unknown dataset `{0}`")]
    Unknown(String),
    #[error("dataset file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("missing dataset file {0}")]
    Missing(PathBuf),
    #[error("manifest for `{dataset}` declares {expected} tasks, found {found}")]
    CountMismatch {
        dataset: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate task id `{0}`")]
    DuplicateTask(String),
    #[error("task `{task}`: {reason}")]
    InvalidTask { task: String, reason: String },
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("dataset i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Area {
    Cg,
    Apr,
    Sc,
}

impl fmt::Display for Area {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Area::Cg => "cg",
            Area::Apr => "apr",
            Area::Sc => "sc",
        })
    }
}

/// Whether a dataset asks the model to write new code or repair given code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    Generate,
    Repair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    UnitSuite,
    AnalyzerScan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSpec {
    pub kind: TestKind,
    /// Driver descriptor for unit suites, analyzer id for scans.
    pub entry: String,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub dataset_id: String,
    pub area: Area,
    pub language: String,
    /// Problem text shown to the model (HumanEval prompt, SecurityEval partial file).
    pub description: String,
    /// Buggy or partial code for repair tasks.
    pub source_code: Option<String>,
    pub test_spec: TestSpec,
    /// Known-good answer, when the dataset ships one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_solution: Option<String>,
    /// Adapter-private material (test code, entry points, file names).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
    /// Reason this task cannot be evaluated in the current environment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip: Option<String>,
}

impl TaskRecord {
    /// Code shown to the model: the buggy source for repair tasks, the
    /// description otherwise.
    pub fn prompt_material(&self) -> &str {
        self.source_code.as_deref().unwrap_or(&self.description)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: u32,
    pub failed: u32,
    pub findings: Vec<Finding>,
    /// Short classification: `ok`, `tests failed`, `timeout`, `compile`,
    /// `syntax`, `findings`, `no tests`.
    pub detail: String,
    /// Captured evidence (test output, compiler errors, findings) used in
    /// correction prompts.
    #[serde(default)]
    pub log: String,
}

impl Verdict {
    /// The single pass definition used for every dataset.
    pub fn is_pass(&self) -> bool {
        self.failed == 0 && self.findings.is_empty()
    }

    pub fn timeout() -> Self {
        Self {
            passed: 0,
            failed: 1,
            findings: Vec::new(),
            detail: "timeout".into(),
            log: "execution exceeded the time limit".into(),
        }
    }

    pub fn from_findings(findings: Vec<Finding>) -> Self {
        if findings.is_empty() {
            return Self {
                passed: 1,
                failed: 0,
                findings,
                detail: "ok".into(),
                log: String::new(),
            };
        }
        let log = findings
            .iter()
            .map(|f| format!("line {}: {} ({})", f.location.line, f.message, f.rule_id))
            .collect::<Vec<_>>()
            .join("\n");
        Self {
            passed: 0,
            failed: 1,
            findings,
            detail: "findings".into(),
            log,
        }
    }

    /// Builds a verdict from a driver run. A `RESULT passed=.. failed=..`
    /// line takes precedence; otherwise the exit status decides.
    pub fn from_outcome(outcome: &ExecOutcome) -> Self {
        if outcome.timed_out {
            return Self::timeout();
        }
        let log = join_output(outcome);
        if let Some((passed, failed)) = parse_result_line(&outcome.stdout) {
            let ok = failed == 0 && passed > 0 && outcome.exit_status == 0;
            let detail = if ok {
                "ok"
            } else if passed + failed == 0 {
                "no tests"
            } else {
                "tests failed"
            };
            // a crash after reporting still counts as a failure
            let failed = if !ok && failed == 0 { 1 } else { failed };
            return Self {
                passed,
                failed,
                findings: Vec::new(),
                detail: detail.into(),
                log,
            };
        }
        if outcome.exit_status == 0 {
            Self {
                passed: 1,
                failed: 0,
                findings: Vec::new(),
                detail: "ok".into(),
                log,
            }
        } else {
            let detail = if outcome.stderr.contains("SyntaxError") || outcome.stderr.contains("IndentationError") {
                "syntax"
            } else {
                "tests failed"
            };
            Self {
                passed: 0,
                failed: 1,
                findings: Vec::new(),
                detail: detail.into(),
                log,
            }
        }
    }

    pub fn compile_failure(outcome: &ExecOutcome) -> Self {
        if outcome.timed_out {
            return Self::timeout();
        }
        Self {
            passed: 0,
            failed: 1,
            findings: Vec::new(),
            detail: "compile".into(),
            log: join_output(outcome),
        }
    }
}

fn join_output(outcome: &ExecOutcome) -> String {
    let mut log = outcome.stdout.trim_end().to_string();
    let err = outcome.stderr.trim_end();
    if !err.is_empty() {
        if !log.is_empty() {
            log.push('\n');
        }
        log.push_str(err);
    }
    log
}

/// Finds the last `RESULT passed=N failed=M` line.
pub fn parse_result_line(stdout: &str) -> Option<(u32, u32)> {
    stdout.lines().rev().find_map(|line| {
        let rest = line.trim().strip_prefix(RESULT_MARKER)?;
        let mut passed = None;
        let mut failed = None;
        for field in rest.split_whitespace() {
            if let Some(v) = field.strip_prefix("passed=") {
                passed = v.parse().ok();
            } else if let Some(v) = field.strip_prefix("failed=") {
                failed = v.parse().ok();
            }
        }
        Some((passed?, failed?))
    })
}

/// Environment handed to adapters while testing.
#[derive(Debug, Clone, Default)]
pub struct DatasetEnv {
    /// Dependency paths from the run configuration.
    pub paths: BTreeMap<String, PathBuf>,
    /// Dataset root the tasks were loaded from.
    pub root: PathBuf,
}

impl DatasetEnv {
    /// Resolves a program via a configured home directory key (`<home>/bin/<name>`)
    /// or `PATH`.
    pub fn find_program(&self, name: &str, home_keys: &[&str]) -> Option<PathBuf> {
        for key in home_keys {
            if let Some(home) = self.paths.get(*key).filter(|p| !p.as_os_str().is_empty()) {
                let candidate = home.join("bin").join(name);
                if candidate.is_file() {
                    return Some(candidate);
                }
            }
        }
        find_on_path(name)
    }
}

pub fn find_on_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(name))
        .find(|p| p.is_file())
}

/// A dataset family: how prompts are loaded and answers tested.
pub trait DatasetAdapter: Send + Sync {
    fn area(&self) -> Area;

    fn prompt_style(&self) -> PromptStyle;

    /// Default `max_new_tokens` for this dataset.
    fn default_max_new_tokens(&self) -> u32;

    /// Key in the configuration's `paths` map naming a user-provided root.
    fn root_key(&self) -> Option<&str> {
        None
    }

    /// Root of the bundled mini-suite, if any.
    fn bundled_root(&self) -> Option<PathBuf> {
        None
    }

    /// Loads every task under `root`. Skip markers are set here.
    fn load_prompts(&self, dataset_id: &str, root: &Path, env: &DatasetEnv) -> Result<Vec<TaskRecord>, DatasetError>;

    /// Tests `code` for `task` inside `workspace`.
    fn test_answer(
        &self,
        task: &TaskRecord,
        code: &str,
        sandbox: &SandboxHandle,
        workspace: &Path,
        env: &DatasetEnv,
    ) -> Result<Verdict, DatasetError>;

    /// Analyzer id used for scan verdicts, if this adapter scans.
    fn analyzer_id(&self) -> Option<&str> {
        None
    }
}

/// Orders ids with embedded numbers numerically: `T/2 < T/10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    if a.is_empty() || b.is_empty() {
        return a.cmp(b);
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for ((da, sa), (db, sb)) in ca.iter().zip(cb.iter()) {
        let ord = match (da, db) {
            (true, true) => {
                let (ta, tb) = (sa.trim_start_matches('0'), sb.trim_start_matches('0'));
                ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb))
            }
            _ => sa.cmp(sb),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len()).then_with(|| a.cmp(b))
}

#[derive(Debug, Deserialize)]
struct Manifest {
    #[allow(dead_code)]
    dataset: Option<String>,
    count: usize,
    #[serde(default)]
    skip: BTreeMap<String, String>,
}

/// Sorts tasks, rejects duplicate ids and applies `manifest.json` (count
/// check and skip markers) when one is present in `root`.
pub fn finalize_tasks(
    dataset_id: &str,
    root: &Path,
    mut tasks: Vec<TaskRecord>,
) -> Result<Vec<TaskRecord>, DatasetError> {
    tasks.sort_by(|a, b| natural_cmp(&a.task_id, &b.task_id));
    let mut seen = BTreeSet::new();
    for t in &tasks {
        if !seen.insert(t.task_id.as_str()) {
            return Err(DatasetError::DuplicateTask(t.task_id.clone()));
        }
        if t.area == Area::Apr && t.source_code.as_deref().is_none_or(str::is_empty) {
            return Err(DatasetError::InvalidTask {
                task: t.task_id.clone(),
                reason: "repair task without source code".into(),
            });
        }
    }
    let manifest_path = root.join("manifest.json");
    if manifest_path.is_file() {
        let text = std::fs::read_to_string(&manifest_path)?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| DatasetError::Malformed {
            path: manifest_path.clone(),
            reason: e.to_string(),
        })?;
        if manifest.count != tasks.len() {
            return Err(DatasetError::CountMismatch {
                dataset: dataset_id.to_string(),
                expected: manifest.count,
                found: tasks.len(),
            });
        }
        for t in &mut tasks {
            if let Some(reason) = manifest.skip.get(&t.task_id) {
                t.skip.get_or_insert_with(|| reason.clone());
            }
        }
    }
    Ok(tasks)
}

pub(crate) fn read_file(path: &Path) -> Result<String, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::Missing(path.to_path_buf()));
    }
    Ok(std::fs::read_to_string(path)?)
}

/// Directory holding the bundled mini-suites.
pub fn bundled_suites_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("suites")
}

/// Registered adapters, keyed by dataset id.
#[derive(Clone)]
pub struct DatasetRegistry {
    adapters: BTreeMap<String, Arc<dyn DatasetAdapter>>,
}

impl fmt::Debug for DatasetRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.adapters.keys()).finish()
    }
}

impl Default for DatasetRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl DatasetRegistry {
    pub fn empty() -> Self {
        Self {
            adapters: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let suites = bundled_suites_dir();
        let mut reg = Self::empty();
        let builtins: [(&str, Arc<dyn DatasetAdapter>); 5] = [
            (
                HUMANEVAL,
                Arc::new(HumanEvalAdapter::new(Some(suites.join("humaneval")))),
            ),
            (
                QUIXBUGS_PYTHON,
                Arc::new(QuixBugsAdapter::new(
                    QuixLanguage::Python,
                    Some(suites.join("quixbugs")),
                )),
            ),
            (
                QUIXBUGS_JAVA,
                Arc::new(QuixBugsAdapter::new(QuixLanguage::Java, Some(suites.join("quixbugs")))),
            ),
            (
                SECURITYEVAL,
                Arc::new(SecurityEvalAdapter::new(Some(suites.join("securityeval")))),
            ),
            (LLMVUL, Arc::new(TaskDirAdapter::llm_vul(Some(suites.join("llmvul"))))),
        ];
        for (id, adapter) in builtins {
            reg.register(id, adapter).expect("builtin ids are unique");
        }
        reg
    }

    pub fn register(&mut self, dataset_id: &str, adapter: Arc<dyn DatasetAdapter>) -> Result<(), DatasetError> {
        if self.adapters.contains_key(dataset_id) {
            return Err(DatasetError::Duplicate(dataset_id.to_string()));
        }
        self.adapters.insert(dataset_id.to_string(), adapter);
        Ok(())
    }

    /// Replaces an adapter (e.g. to select a different analyzer).
    pub fn replace(&mut self, dataset_id: &str, adapter: Arc<dyn DatasetAdapter>) {
        self.adapters.insert(dataset_id.to_string(), adapter);
    }

    pub fn get(&self, dataset_id: &str) -> Result<&Arc<dyn DatasetAdapter>, DatasetError> {
        self.adapters
            .get(dataset_id)
            .ok_or_else(|| DatasetError::Unknown(dataset_id.to_string()))
    }

    pub fn contains(&self, dataset_id: &str) -> bool {
        self.adapters.contains_key(dataset_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.adapters.keys().map(String::as_str)
    }

    /// Resolves the root for `dataset_id`: the configured path when the
    /// adapter's key is set and non-empty, else the bundled mini-suite.
    pub fn resolve_root(&self, dataset_id: &str, paths: &BTreeMap<String, PathBuf>) -> Result<PathBuf, DatasetError> {
        let adapter = self.get(dataset_id)?;
        if let Some(key) = adapter.root_key() {
            if let Some(p) = paths.get(key).filter(|p| !p.as_os_str().is_empty()) {
                if !p.exists() {
                    return Err(DatasetError::Missing(p.clone()));
                }
                return Ok(p.clone());
            }
        }
        adapter.bundled_root().ok_or_else(|| DatasetError::InvalidTask {
            task: dataset_id.to_string(),
            reason: format!("no bundled suite; set paths.{}", adapter.root_key().unwrap_or("<root>")),
        })
    }

    /// Convenience: resolve the root and load tasks.
    pub fn load_prompts(&self, dataset_id: &str, env: &DatasetEnv) -> Result<Vec<TaskRecord>, DatasetError> {
        let root = if env.root.as_os_str().is_empty() {
            self.resolve_root(dataset_id, &env.paths)?
        } else {
            env.root.clone()
        };
        let env = DatasetEnv {
            paths: env.paths.clone(),
            root: root.clone(),
        };
        self.get(dataset_id)?.load_prompts(dataset_id, &root, &env)
    }
}
