//! Evaluation driver. The outer loop walks models (load, evaluate every
//! dataset, unload), the inner loop walks datasets. Per task and attempt:
//! build prompt, render template, generate, extract, test, and on failure
//! run correction rounds up to the chain budget.
//!
//! Generation is strictly sequential. Testing a round of generated answers
//! runs on a bounded worker pool.

mod external;
mod persist;
mod sweep;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analyzers::{BUILTIN_ANALYZER_ID, BUILTIN_FIDELITY_NOTE};
use crate::backend::{
    Backend, BackendError, GenerationParams, GenerationRequest, HttpBackend, RequestContext, ScriptedBackend,
};
use crate::config::{BackendSpec, ConfigError, ConversationType, ModelSpec, Registries, RunConfig};
use crate::datasets::{Area, DatasetAdapter, DatasetEnv, DatasetError, PromptStyle, TaskRecord, TestKind, Verdict};
use crate::extraction::{extract_code, ExtractionResult};
use crate::metrics::{default_ks, summarize, MetricsError, MetricsSummary, SummaryInput, TaskSample};
use crate::prompts::{
    build_apr_prompt, build_cg_prompt, build_correction_prompt, PreviousAttempt, PromptBundle, PromptError,
    PromptVariant, APR_DEFAULT, CG_DEFAULT,
};
use crate::sandbox::{SandboxError, SandboxHandle};
use crate::templating::{ChatTemplate, Message, TemplateError};

pub use external::run_external_suite;
pub use persist::{
    file_name, file_stem, load_manifest, load_records, load_summaries, persist_results, sha256_hex, verify_results,
    write_atomic, ExternalArchive, FileKind, Manifest, ManifestEntry, ResultsWriter, HARNESS_VERSION, MANIFEST_FILE,
    SCHEMA_VERSION,
};
pub use sweep::{load_sweep_index, sweep_points, SweepIndex, SweepPoint, SweepRun, SWEEP_INDEX_FILE};

pub const CHAIN_SEMANTICS: &str =
    "an attempt passes if any answer in its correction chain passed; chains never add attempts";
pub const THROUGHPUT_DEFINITION: &str = "sum of completion tokens divided by sum of generation time";
pub const SEED_POLICY: &str =
    "with sampling enabled, seed = first 8 bytes (little endian) of sha256(run_seed, task_id, attempt, depth)";
pub const WORKSPACE_PLACEHOLDER: &str = "<workspace>";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("backend error on task `{task_id}` (attempt {attempt}, depth {depth}): {source}")]
    Backend {
        task_id: String,
        attempt: u32,
        depth: u32,
        #[source]
        source: BackendError,
    },
    #[error("backend `{backend}` unavailable: {source}")]
    BackendSetup {
        backend: String,
        #[source]
        source: BackendError,
    },
    #[error("testing task `{task_id}` (attempt {attempt}, depth {depth}) failed: {source}")]
    Testing {
        task_id: String,
        attempt: u32,
        depth: u32,
        #[source]
        source: DatasetError,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("{0}")]
    Unsupported(String),
    #[error("cannot write {path}: {reason}")]
    Persistence { path: PathBuf, reason: String },
    #[error("integrity error in {file}: {reason}")]
    Integrity { file: PathBuf, reason: String },
    #[error("no {} in {0}", MANIFEST_FILE)]
    MissingManifest(PathBuf),
}

impl OrchestratorError {
    /// Errors that end the current model's evaluation.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            OrchestratorError::Backend { .. } | OrchestratorError::BackendSetup { .. }
        )
    }

    /// Errors that end the whole run.
    pub fn is_fatal(&self) -> bool {
        matches!(self, OrchestratorError::Persistence { .. })
    }
}

/// One model attempt or correction round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub task_id: String,
    pub attempt_index: u32,
    pub chain_depth: u32,
    pub variant_id: String,
    /// Conversation sent to the model; empty in infilling mode.
    pub messages: Vec<Message>,
    /// Rendered prompt text.
    pub prompt: String,
    pub raw_response: String,
    pub extracted: ExtractionResult,
    /// Code handed to the tester.
    pub code: String,
    pub verdict: Option<Verdict>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub elapsed: Duration,
    /// Token counts are proxy estimates.
    pub estimated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Answer {
    pub fn passed(&self) -> bool {
        self.verdict.as_ref().is_some_and(Verdict::is_pass)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedTask {
    pub task_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipKind {
    /// Backend failed; remaining datasets of the model were not evaluated.
    ModelAborted,
    /// Adapter or sandbox failure; only this dataset was skipped.
    DatasetFailed,
    ExternalSuiteFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub kind: SkipKind,
    pub reason: String,
}

/// Everything produced for one (model, dataset) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub harness_version: String,
    pub model: ModelSpec,
    pub dataset_id: String,
    pub area: Area,
    pub answers_per_task: u32,
    pub max_chain_depth: u32,
    pub started: String,
    pub finished: String,
    /// Effective configuration after overrides.
    pub config: serde_json::Value,
    pub params: GenerationParams,
    pub variant_id: String,
    pub metadata: BTreeMap<String, String>,
    pub skipped_tasks: Vec<SkippedTask>,
    pub summary: MetricsSummary,
    pub answers: Vec<Answer>,
}

/// The summary file: a record without its answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub harness_version: String,
    pub model: ModelSpec,
    pub dataset_id: String,
    pub area: Area,
    pub answers_per_task: u32,
    pub max_chain_depth: u32,
    pub started: String,
    pub finished: String,
    pub params: GenerationParams,
    pub variant_id: String,
    pub metadata: BTreeMap<String, String>,
    pub skipped_tasks: Vec<SkippedTask>,
    pub summary: MetricsSummary,
}

impl RunRecord {
    pub fn summary_document(&self) -> RunSummary {
        RunSummary {
            schema_version: self.schema_version,
            harness_version: self.harness_version.clone(),
            model: self.model.clone(),
            dataset_id: self.dataset_id.clone(),
            area: self.area,
            answers_per_task: self.answers_per_task,
            max_chain_depth: self.max_chain_depth,
            started: self.started.clone(),
            finished: self.finished.clone(),
            params: self.params.clone(),
            variant_id: self.variant_id.clone(),
            metadata: self.metadata.clone(),
            skipped_tasks: self.skipped_tasks.clone(),
            summary: self.summary.clone(),
        }
    }

    /// Recomputes the summary from the stored answers.
    pub fn recompute_summary(&self) -> Result<MetricsSummary, MetricsError> {
        summarize_answers(&self.answers, self.answers_per_task, self.skipped_tasks.len() as u32)
    }

    pub fn answers_for<'a>(&'a self, task_id: &'a str) -> impl Iterator<Item = &'a Answer> + 'a {
        self.answers.iter().filter(move |a| a.task_id == task_id)
    }
}

/// Builds the metrics summary. Attempt `i` of a task passes iff any answer in
/// its chain passed.
pub fn summarize_answers(
    answers: &[Answer],
    answers_per_task: u32,
    skipped: u32,
) -> Result<MetricsSummary, MetricsError> {
    let mut per_task: Vec<(&str, Vec<bool>)> = Vec::new();
    let mut tokens = 0u64;
    let mut elapsed = Duration::ZERO;
    for a in answers {
        tokens += a.completion_tokens;
        elapsed += a.elapsed;
        let idx = match per_task.iter().position(|(t, _)| *t == a.task_id) {
            Some(i) => i,
            None => {
                per_task.push((&a.task_id, vec![false; answers_per_task as usize]));
                per_task.len() - 1
            }
        };
        if let Some(slot) = per_task[idx].1.get_mut(a.attempt_index as usize) {
            *slot |= a.passed();
        }
    }
    let mut samples = Vec::with_capacity(per_task.len());
    for (task, attempts) in &per_task {
        let c = attempts.iter().filter(|p| **p).count() as u32;
        samples.push(TaskSample::new(*task, answers_per_task, c)?);
    }
    let passed: u64 = samples.iter().map(|s| u64::from(s.c)).sum();
    let input = SummaryInput {
        answers_total: samples.len() as u64 * u64::from(answers_per_task),
        answers_passed: passed,
        samples,
        completion_tokens: tokens,
        elapsed,
        skipped,
    };
    summarize(&input, &default_ks(answers_per_task))
}

/// Per-attempt sampling seed.
pub fn derive_seed(run_seed: u64, task_id: &str, attempt: u32, depth: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(task_id.as_bytes());
    h.update([0u8]);
    h.update(attempt.to_le_bytes());
    h.update(depth.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 8 bytes"))
}

pub(crate) fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Fixed inputs for evaluating the tasks of one (model, dataset) pair.
pub struct TaskContext<'a> {
    pub backend: &'a dyn Backend,
    pub template: &'a ChatTemplate,
    pub conversation_type: ConversationType,
    pub adapter: &'a dyn DatasetAdapter,
    pub variant: &'a PromptVariant,
    pub params: GenerationParams,
    pub env: DatasetEnv,
    pub sandbox: &'a SandboxHandle,
    /// Workspace key prefix, e.g. model and dataset.
    pub workspace_key: Vec<String>,
    pub answers_per_task: u32,
    pub max_chain_depth: u32,
    pub error_cap: usize,
    pub run_seed: u64,
}

struct Pending {
    task: usize,
    conversation: Option<PromptBundle>,
    answer: Answer,
}

impl TaskContext<'_> {
    fn initial_prompt(&self, task: &TaskRecord) -> Result<(Option<PromptBundle>, String), OrchestratorError> {
        match self.conversation_type {
            ConversationType::Infilling => {
                if self.adapter.prompt_style() == PromptStyle::Repair {
                    return Err(OrchestratorError::Unsupported(
                        "infilling mode applies to generation datasets only".into(),
                    ));
                }
                Ok((None, self.template.render_infill(task.prompt_material(), "")?))
            }
            ConversationType::Instruction => {
                let bundle = match self.adapter.prompt_style() {
                    PromptStyle::Generate => build_cg_prompt(task, self.variant)?,
                    PromptStyle::Repair => build_apr_prompt(task, self.variant)?,
                };
                let prompt = self.template.render(&bundle.messages)?;
                Ok((Some(bundle), prompt))
            }
        }
    }

    fn generate(
        &self,
        task: &TaskRecord,
        attempt: u32,
        depth: u32,
        conversation: Option<&PromptBundle>,
        prompt: String,
    ) -> Result<Answer, OrchestratorError> {
        let mut params = self.params.clone();
        if params.do_sample {
            params.seed = Some(derive_seed(self.run_seed, &task.task_id, attempt, depth));
        }
        let context = RequestContext {
            task_id: task.task_id.clone(),
            attempt_index: attempt,
            chain_depth: depth,
        };
        let request = GenerationRequest {
            prompt: &prompt,
            params: &params,
            context: &context,
        };
        let result = self
            .backend
            .generate(&request)
            .map_err(|source| OrchestratorError::Backend {
                task_id: task.task_id.clone(),
                attempt,
                depth,
                source,
            })?;
        let extracted = extract_code(&result.text);
        let code = match conversation {
            Some(_) => extracted.code.clone(),
            None => format!("{}{}", task.prompt_material(), extracted.code),
        };
        Ok(Answer {
            task_id: task.task_id.clone(),
            attempt_index: attempt,
            chain_depth: depth,
            variant_id: self.variant.variant_id.clone(),
            messages: conversation.map(|c| c.messages.clone()).unwrap_or_default(),
            prompt,
            raw_response: result.text,
            extracted,
            code,
            verdict: None,
            prompt_tokens: result.prompt_tokens,
            completion_tokens: result.completion_tokens,
            elapsed: result.elapsed,
            estimated: result.estimated,
            seed: params.seed,
        })
    }

    fn test(&self, task: &TaskRecord, answer: &Answer) -> Result<Verdict, DatasetError> {
        let attempt = answer.attempt_index.to_string();
        let depth = answer.chain_depth.to_string();
        let mut parts: Vec<&str> = self.workspace_key.iter().map(String::as_str).collect();
        parts.extend([task.task_id.as_str(), attempt.as_str(), depth.as_str()]);
        let ws = self.sandbox.workspace(&parts)?;
        let verdict = self
            .adapter
            .test_answer(task, &answer.code, self.sandbox, &ws, &self.env);
        self.sandbox.release(&ws);
        let mut verdict = verdict?;
        // scratch paths differ between runs
        for p in [ws.as_path(), self.sandbox.scratch_root()] {
            if let Some(s) = p.to_str() {
                verdict.log = verdict.log.replace(s, WORKSPACE_PLACEHOLDER);
            }
        }
        Ok(verdict)
    }

    fn test_round(&self, tasks: &[TaskRecord], pending: &[Pending]) -> Result<Vec<Verdict>, OrchestratorError> {
        let workers = self.sandbox.limits().parallelism_cap.clamp(1, pending.len().max(1));
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<Verdict, DatasetError>>>> =
            Mutex::new((0..pending.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(p) = pending.get(i) else { break };
                    let r = self.test(&tasks[p.task], &p.answer);
                    results.lock().expect("results lock")[i] = Some(r);
                });
            }
        });
        let results = results.into_inner().expect("results lock");
        results
            .into_iter()
            .zip(pending)
            .map(|(r, p)| {
                r.expect("every answer tested")
                    .map_err(|source| OrchestratorError::Testing {
                        task_id: p.answer.task_id.clone(),
                        attempt: p.answer.attempt_index,
                        depth: p.answer.chain_depth,
                        source,
                    })
            })
            .collect()
    }
}

/// Evaluates one task: `answers_per_task` attempts, each followed by
/// correction rounds while it fails and budget remains.
pub fn evaluate_task(task: &TaskRecord, ctx: &TaskContext<'_>) -> Result<Vec<Answer>, OrchestratorError> {
    evaluate_tasks(std::slice::from_ref(task), ctx)
}

/// Evaluates tasks round by round: all pending answers are generated in
/// order, then tested in parallel, then failing ones get their next
/// correction. Answers come back ordered by task, attempt and depth.
pub fn evaluate_tasks(tasks: &[TaskRecord], ctx: &TaskContext<'_>) -> Result<Vec<Answer>, OrchestratorError> {
    let mut pending = Vec::new();
    for (ti, task) in tasks.iter().enumerate() {
        for attempt in 0..ctx.answers_per_task {
            let (conversation, prompt) = ctx.initial_prompt(task)?;
            let answer = ctx.generate(task, attempt, 0, conversation.as_ref(), prompt)?;
            pending.push(Pending {
                task: ti,
                conversation,
                answer,
            });
        }
    }
    let mut done: Vec<(usize, Answer)> = Vec::new();
    while !pending.is_empty() {
        let verdicts = ctx.test_round(tasks, &pending)?;
        let mut next = Vec::new();
        for (mut p, verdict) in pending.into_iter().zip(verdicts) {
            let log = verdict.log.clone();
            p.answer.verdict = Some(verdict);
            let depth = p.answer.chain_depth;
            if !p.answer.passed() && depth < ctx.max_chain_depth {
                if let Some(conversation) = &p.conversation {
                    let previous = PreviousAttempt {
                        raw_response: &p.answer.raw_response,
                        chain_depth: depth,
                        passed: false,
                    };
                    let bundle =
                        build_correction_prompt(conversation, previous, &log, ctx.max_chain_depth, ctx.error_cap)?;
                    let prompt = ctx.template.render(&bundle.messages)?;
                    let task = &tasks[p.task];
                    let answer = ctx.generate(task, p.answer.attempt_index, depth + 1, Some(&bundle), prompt)?;
                    next.push(Pending {
                        task: p.task,
                        conversation: Some(bundle),
                        answer,
                    });
                }
            }
            done.push((p.task, p.answer));
        }
        pending = next;
    }
    done.sort_by_key(|(t, a)| (*t, a.attempt_index, a.chain_depth));
    Ok(done.into_iter().map(|(_, a)| a).collect())
}

/// Result of a run: persisted records plus skip records.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub results_dir: PathBuf,
    pub records: Vec<RunRecord>,
    pub skips: Vec<SkipRecord>,
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn aborted_models(&self) -> impl Iterator<Item = &SkipRecord> {
        self.skips.iter().filter(|s| s.kind == SkipKind::ModelAborted)
    }

    pub fn record(&self, model: &str, dataset: &str) -> Option<&RunRecord> {
        self.records
            .iter()
            .find(|r| r.model.to_string() == model && r.dataset_id == dataset)
    }
}

/// Runs a validated configuration.
pub struct Evaluator {
    config: RunConfig,
    registries: Registries,
    backends: BTreeMap<String, Arc<dyn Backend>>,
    sweep_values: BTreeMap<String, String>,
}

impl std::fmt::Debug for Evaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Evaluator")
            .field("config", &self.config)
            .field("backends", &self.backends.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Evaluator {
    pub fn new(config: RunConfig, registries: &Registries) -> Result<Self, OrchestratorError> {
        config.validate(registries)?;
        let registries = registries.extended_for(&config)?;
        Ok(Self {
            config,
            registries,
            backends: BTreeMap::new(),
            sweep_values: BTreeMap::new(),
        })
    }

    /// Serves `backend_id` with the given backend instead of the configured one.
    pub fn with_backend(mut self, backend_id: impl Into<String>, backend: Arc<dyn Backend>) -> Self {
        self.backends.insert(backend_id.into(), backend);
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn registries(&self) -> &Registries {
        &self.registries
    }

    fn backend_for(&self, model: &ModelSpec) -> Result<Arc<dyn Backend>, BackendError> {
        if let Some(b) = self.backends.get(&model.backend_id) {
            return Ok(b.clone());
        }
        Ok(match self.config.backend_spec(&model.backend_id) {
            BackendSpec::Http(cfg) => Arc::new(HttpBackend::new(&model.backend_id, cfg)?),
            BackendSpec::Scripted(spec) => Arc::new(ScriptedBackend::new(&model.backend_id, spec.load()?)),
        })
    }

    fn sandbox(&self) -> Result<SandboxHandle, OrchestratorError> {
        let sb = &self.config.sandbox;
        let mut handle = SandboxHandle::new(sb.scratch_dir.as_deref(), sb.limits())?
            .keep_artifacts(sb.keep_artifacts)
            .with_isolation_prefix(sb.isolation_prefix.clone());
        for (id, spec) in &self.config.analyzers {
            handle.register_analyzer(spec.clone().into_entry(id)?);
        }
        Ok(handle)
    }

    /// Runs every model over every dataset and persists results.
    pub fn run(&self) -> Result<RunOutcome, OrchestratorError> {
        let cfg = &self.config;
        let sandbox = self.sandbox()?;
        let mut writer = ResultsWriter::open(&cfg.results_dir, cfg.resume)?;
        writer.set_sweep(self.sweep_values.clone());
        writer.flush()?;
        let mut records = Vec::new();
        let mut skips = Vec::new();

        for model in &cfg.model_configs {
            let name = model.to_string();
            let mut pending_datasets: Vec<&String> = Vec::new();
            for dataset in &cfg.datasets {
                match cfg.resume.then(|| writer.completed(model, dataset)).flatten() {
                    Some(record) => {
                        log::info!("{name} / {dataset}: reusing persisted results");
                        records.push(record);
                    }
                    None => pending_datasets.push(dataset),
                }
            }
            let needs_external = cfg.run_external_suite
                && !(cfg.resume
                    && writer
                        .manifest()
                        .external
                        .iter()
                        .any(|a| a.model == name && a.exit_status == 0));
            if pending_datasets.is_empty() && !needs_external {
                continue;
            }

            let backend = match self.backend_for(model).and_then(|b| b.load().map(|_| b)) {
                Ok(b) => b,
                Err(e) => {
                    log::error!("{name}: {e}");
                    let skip = SkipRecord {
                        model: name.clone(),
                        dataset: None,
                        kind: SkipKind::ModelAborted,
                        reason: e.to_string(),
                    };
                    writer.add_skip(skip.clone())?;
                    skips.push(skip);
                    continue;
                }
            };

            let mut aborted = false;
            for dataset in pending_datasets {
                log::info!("{name} / {dataset}: evaluating");
                match self.evaluate_dataset(model, backend.as_ref(), dataset, &sandbox) {
                    Ok(record) => {
                        writer.write_record(&record)?;
                        records.push(record);
                    }
                    Err(e) if e.is_backend() => {
                        log::error!("{name} / {dataset}: {e}");
                        let skip = SkipRecord {
                            model: name.clone(),
                            dataset: Some(dataset.clone()),
                            kind: SkipKind::ModelAborted,
                            reason: e.to_string(),
                        };
                        writer.add_skip(skip.clone())?;
                        skips.push(skip);
                        aborted = true;
                        break;
                    }
                    Err(e) if e.is_fatal() => return Err(e),
                    Err(e) => {
                        log::warn!("{name} / {dataset}: skipped: {e}");
                        let skip = SkipRecord {
                            model: name.clone(),
                            dataset: Some(dataset.clone()),
                            kind: SkipKind::DatasetFailed,
                            reason: e.to_string(),
                        };
                        writer.add_skip(skip.clone())?;
                        skips.push(skip);
                    }
                }
            }

            if needs_external && !aborted {
                let spec = cfg.external_suite.as_ref().expect("validated");
                let endpoint = match cfg.backend_spec(&model.backend_id) {
                    BackendSpec::Http(h) => h.url,
                    BackendSpec::Scripted(_) => String::new(),
                };
                match run_external_suite(spec, model, &endpoint, writer.dir()) {
                    Ok(archive) => {
                        let failed = archive.exit_status != 0;
                        writer.add_external(archive.clone())?;
                        if failed {
                            let skip = SkipRecord {
                                model: name.clone(),
                                dataset: None,
                                kind: SkipKind::ExternalSuiteFailed,
                                reason: format!("external suite exited with status {}", archive.exit_status),
                            };
                            writer.add_skip(skip.clone())?;
                            skips.push(skip);
                        }
                    }
                    Err(e) if e.is_fatal() => return Err(e),
                    Err(e) => {
                        let skip = SkipRecord {
                            model: name.clone(),
                            dataset: None,
                            kind: SkipKind::ExternalSuiteFailed,
                            reason: e.to_string(),
                        };
                        writer.add_skip(skip.clone())?;
                        skips.push(skip);
                    }
                }
            }
            if let Err(e) = backend.unload() {
                log::warn!("{name}: unload failed: {e}");
            }
        }
        writer.flush()?;
        Ok(RunOutcome {
            results_dir: cfg.results_dir.clone(),
            records,
            skips,
            manifest: writer.finish(),
        })
    }

    fn variant_for(&self, dataset: &str, style: PromptStyle) -> Result<&PromptVariant, OrchestratorError> {
        let id = self
            .config
            .dataset_override(dataset)
            .prompt_variant
            .or_else(|| self.config.prompt_variant.clone())
            .unwrap_or_else(|| {
                match style {
                    PromptStyle::Generate => CG_DEFAULT,
                    PromptStyle::Repair => APR_DEFAULT,
                }
                .to_string()
            });
        Ok(self.registries.prompts.get(&id)?)
    }

    /// Evaluates one dataset for one loaded model.
    pub fn evaluate_dataset(
        &self,
        model: &ModelSpec,
        backend: &dyn Backend,
        dataset_id: &str,
        sandbox: &SandboxHandle,
    ) -> Result<RunRecord, OrchestratorError> {
        let cfg = &self.config;
        let started = timestamp();
        let adapter = self.registries.datasets.get(dataset_id)?;
        let root = self.registries.datasets.resolve_root(dataset_id, &cfg.paths)?;
        let env = DatasetEnv {
            paths: cfg.paths.clone(),
            root: root.clone(),
        };
        let overrides = cfg.dataset_override(dataset_id);
        let mut tasks = adapter.load_prompts(dataset_id, &root, &env)?;
        for t in &mut tasks {
            if let Some(secs) = overrides.timeout_secs {
                t.test_spec.timeout = Duration::from_secs(secs);
            }
            if let (Some(a), TestKind::AnalyzerScan) = (&overrides.analyzer, t.test_spec.kind) {
                t.test_spec.entry = a.clone();
            }
        }
        let (runnable, skipped): (Vec<TaskRecord>, Vec<TaskRecord>) = tasks.into_iter().partition(|t| t.skip.is_none());
        let skipped_tasks: Vec<SkippedTask> = skipped
            .into_iter()
            .map(|t| SkippedTask {
                reason: t.skip.unwrap_or_default(),
                task_id: t.task_id,
            })
            .collect();

        let variant = self.variant_for(dataset_id, adapter.prompt_style())?;
        let template = self.registries.templates.get(&model.template_id)?;
        let params = cfg
            .generation
            .params_for(adapter.default_max_new_tokens(), overrides.max_new_tokens);
        let infilling = model.conversation_type == ConversationType::Infilling;
        let ctx = TaskContext {
            backend,
            template,
            conversation_type: model.conversation_type,
            adapter: adapter.as_ref(),
            variant,
            params: params.clone(),
            env,
            sandbox,
            workspace_key: vec![model.to_string(), dataset_id.to_string()],
            answers_per_task: cfg.answers_per_task,
            max_chain_depth: if infilling { 0 } else { cfg.max_chain_depth },
            error_cap: cfg.error_cap,
            run_seed: cfg.run_seed,
        };
        let answers = evaluate_tasks(&runnable, &ctx)?;
        let summary = summarize_answers(&answers, cfg.answers_per_task, skipped_tasks.len() as u32)?;

        let mut metadata = BTreeMap::new();
        metadata.insert("chain_semantics".to_string(), CHAIN_SEMANTICS.to_string());
        metadata.insert("throughput_definition".to_string(), THROUGHPUT_DEFINITION.to_string());
        metadata.insert("seed_policy".to_string(), SEED_POLICY.to_string());
        metadata.insert("dataset_root".to_string(), root.display().to_string());
        if infilling && cfg.max_chain_depth > 0 {
            metadata.insert(
                "chain_note".to_string(),
                "correction chains are disabled in infilling mode".to_string(),
            );
        }
        let scanners: std::collections::BTreeSet<&str> = runnable
            .iter()
            .filter(|t| t.test_spec.kind == TestKind::AnalyzerScan)
            .map(|t| t.test_spec.entry.as_str())
            .collect();
        if !scanners.is_empty() {
            metadata.insert(
                "analyzer".to_string(),
                scanners.into_iter().collect::<Vec<_>>().join(","),
            );
        }
        if metadata
            .get("analyzer")
            .is_some_and(|a| a.split(',').any(|id| id == BUILTIN_ANALYZER_ID))
        {
            metadata.insert("analyzer_fidelity".to_string(), BUILTIN_FIDELITY_NOTE.to_string());
        }
        for (k, v) in &self.sweep_values {
            metadata.insert(format!("sweep.{k}"), v.clone());
        }

        Ok(RunRecord {
            schema_version: SCHEMA_VERSION,
            harness_version: HARNESS_VERSION.to_string(),
            model: model.clone(),
            dataset_id: dataset_id.to_string(),
            area: adapter.area(),
            answers_per_task: cfg.answers_per_task,
            max_chain_depth: ctx.max_chain_depth,
            started,
            finished: timestamp(),
            config: cfg.to_value(),
            params,
            variant_id: variant.variant_id.clone(),
            metadata,
            skipped_tasks,
            summary,
            answers,
        })
    }
}

/// Validates `config` and runs it with the configured backends.
pub fn run_evaluation(config: &RunConfig, registries: &Registries) -> Result<RunOutcome, OrchestratorError> {
    Evaluator::new(config.clone(), registries)?.run()
}

/// Path of a result file inside `dir`.
pub fn result_path(dir: &Path, model: &ModelSpec, dataset: &str, kind: FileKind) -> PathBuf {
    dir.join(file_name(model, dataset, kind))
}
