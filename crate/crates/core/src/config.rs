//! Run configuration: a JSON document with a `paths` section and a
//! `testing_configs` section, plus command-line overrides.
//!
//! ```json
//! {
//!   "paths": {"VUL4J_ROOT": "", "JAVA8_PATH": "/usr/lib/jvm/jdk1.8.0_391"},
//!   "testing_configs": {
//!     "model_configs": ["codellama-7b:llama2:instruction"],
//!     "model_dir": "./models",
//!     "answers_per_task": 1,
//!     "max_chain_depth": 1,
//!     "datasets": ["HumanEval", "LlmVul"],
//!     "run_cyberseceval": false,
//!     "results_dir": "results",
//!     "device": "cuda",
//!     "remote_code": true,
//!     "generation_config": {"do_sample": false}
//!   }
//! }
//! ```
//!
//! Unknown keys are rejected. Errors name the offending field by its path in
//! the document.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationParams, HttpBackendConfig, ScriptedBehavior};
use crate::datasets::DatasetRegistry;
use crate::prompts::{PromptError, PromptRegistry};
use crate::sandbox::{AnalyzerCommandSpec, SandboxLimits};
use crate::templating::{TemplateError, TemplateRegistry};

pub const DEFAULT_ENDPOINT: &str = "http://127.0.0.1:8080";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at `{field}`: {reason}")]
    Parse { field: String, reason: String },
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, reason: impl fmt::Display) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.to_string(),
        }
    }

    /// Document path of the offending field.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Parse { field, .. } | ConfigError::Invalid { field, .. } => Some(field),
            ConfigError::Io { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConversationType {
    Instruction,
    Infilling,
}

/// `backend_id:template_id:conversation_type`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModelSpec {
    pub backend_id: String,
    pub template_id: String,
    pub conversation_type: ConversationType,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelSpecError {
    #[error("model spec `{0}` must have three colon-separated fields (backend:template:type)")]
    Arity(String),
    #[error("model spec `{0}` has an empty field")]
    Empty(String),
    #[error("unknown conversation type `{0}` (expected instruction or infilling)")]
    ConversationType(String),
}

pub fn parse_model_spec(text: &str) -> Result<ModelSpec, ModelSpecError> {
    let fields: Vec<&str> = text.split(':').collect();
    let [backend, template, kind] = fields[..] else {
        return Err(ModelSpecError::Arity(text.to_string()));
    };
    if backend.is_empty() || template.is_empty() {
        return Err(ModelSpecError::Empty(text.to_string()));
    }
    let conversation_type = match kind {
        "instruction" => ConversationType::Instruction,
        "infilling" => ConversationType::Infilling,
        other => return Err(ModelSpecError::ConversationType(other.to_string())),
    };
    Ok(ModelSpec {
        backend_id: backend.to_string(),
        template_id: template.to_string(),
        conversation_type,
    })
}

impl FromStr for ModelSpec {
    type Err = ModelSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_model_spec(s)
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = ModelSpecError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        parse_model_spec(&s)
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> Self {
        m.to_string()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.conversation_type {
            ConversationType::Instruction => "instruction",
            ConversationType::Infilling => "infilling",
        };
        write!(f, "{}:{}:{}", self.backend_id, self.template_id, kind)
    }
}

/// Forwarded to backends; the harness itself does not use it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    #[default]
    #[serde(alias = "cuda")]
    Gpu,
    Cpu,
}

/// Decoding defaults. `max_new_tokens` unset means the dataset's default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationDefaults {
    #[serde(default)]
    pub do_sample: bool,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_new_tokens: Option<u32>,
}

fn default_temperature() -> f64 {
    GenerationParams::default().temperature
}

fn default_top_p() -> f64 {
    GenerationParams::default().top_p
}

impl Default for GenerationDefaults {
    fn default() -> Self {
        Self {
            do_sample: false,
            temperature: default_temperature(),
            top_p: default_top_p(),
            max_new_tokens: None,
        }
    }
}

impl GenerationDefaults {
    /// Parameters for a dataset whose adapter defaults to `dataset_tokens`.
    pub fn params_for(&self, dataset_tokens: u32, override_tokens: Option<u32>) -> GenerationParams {
        GenerationParams {
            temperature: self.temperature,
            top_p: self.top_p,
            do_sample: self.do_sample,
            max_new_tokens: override_tokens.or(self.max_new_tokens).unwrap_or(dataset_tokens),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedSpec {
    /// Fixture document path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    /// Inline behavior, used when no fixture is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<ScriptedBehavior>,
}

impl ScriptedSpec {
    pub fn load(&self) -> Result<ScriptedBehavior, BackendError> {
        match (&self.fixture, &self.behavior) {
            (Some(path), _) => ScriptedBehavior::from_file(path),
            (None, Some(b)) => {
                b.validate()?;
                Ok(b.clone())
            }
            (None, None) => Err(BackendError::Document(
                "scripted backend needs `fixture` or `behavior`".into(),
            )),
        }
    }
}

/// How a `backend_id` is served. Ids without an entry use the HTTP backend
/// at `default_endpoint`, with the id forwarded as the model name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Http(HttpBackendConfig),
    Scripted(ScriptedSpec),
}

/// Command run once per model when `run_external_suite` is set. `{model}`,
/// `{endpoint}` and `{output_dir}` are substituted in the arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSuiteSpec {
    pub command: Vec<String>,
    /// Directory the suite writes its results to; archived verbatim.
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_new_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_variant: Option<String>,
    /// Analyzer id for scan-based datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analyzer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxConfig {
    #[serde(default = "default_limit_secs")]
    pub cpu_time_secs: u64,
    #[serde(default = "default_limit_secs")]
    pub wall_time_secs: u64,
    #[serde(default = "default_memory_mb")]
    pub memory_mb: u64,
    #[serde(default = "default_output_cap")]
    pub output_cap_bytes: usize,
    /// Concurrent test executions; defaults to the number of CPUs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub network_allowed: bool,
    #[serde(default)]
    pub keep_artifacts: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scratch_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub isolation_prefix: Vec<String>,
}

fn default_limit_secs() -> u64 {
    60
}

fn default_memory_mb() -> u64 {
    2048
}

fn default_output_cap() -> usize {
    1 << 20
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            cpu_time_secs: default_limit_secs(),
            wall_time_secs: default_limit_secs(),
            memory_mb: default_memory_mb(),
            output_cap_bytes: default_output_cap(),
            parallelism: None,
            network_allowed: false,
            keep_artifacts: false,
            scratch_dir: None,
            isolation_prefix: Vec::new(),
        }
    }
}

impl SandboxConfig {
    pub fn limits(&self) -> SandboxLimits {
        let defaults = SandboxLimits::default();
        SandboxLimits {
            cpu_time: Duration::from_secs(self.cpu_time_secs),
            wall_time: Duration::from_secs(self.wall_time_secs),
            memory_bytes: self.memory_mb.saturating_mul(1024 * 1024),
            output_cap: self.output_cap_bytes,
            network_allowed: self.network_allowed,
            parallelism_cap: self.parallelism.unwrap_or(defaults.parallelism_cap),
        }
    }
}

/// Grid of decoding parameters and prompt variants. An empty axis keeps the
/// base configuration's value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub temperature: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub top_p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompt_variants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip)]
    pub paths: BTreeMap<String, PathBuf>,
    pub model_configs: Vec<ModelSpec>,
    #[serde(default = "default_model_dir")]
    pub model_dir: PathBuf,
    #[serde(default = "one")]
    pub answers_per_task: u32,
    #[serde(default)]
    pub max_chain_depth: u32,
    pub datasets: Vec<String>,
    #[serde(default, alias = "run_cyberseceval")]
    pub run_external_suite: bool,
    #[serde(default = "default_results_dir")]
    pub results_dir: PathBuf,
    #[serde(default)]
    pub device: Device,
    #[serde(default)]
    pub remote_code: bool,
    #[serde(default, rename = "generation_config")]
    pub generation: GenerationDefaults,

    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub backends: BTreeMap<String, BackendSpec>,
    #[serde(default = "default_endpoint")]
    pub default_endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_suite: Option<ExternalSuiteSpec>,
    /// Variant used for every dataset unless a dataset override names one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_variants_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub dataset_overrides: BTreeMap<String, DatasetOverride>,
    #[serde(default)]
    pub sandbox: SandboxConfig,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub analyzers: BTreeMap<String, AnalyzerCommandSpec>,
    #[serde(default)]
    pub run_seed: u64,
    #[serde(default)]
    pub resume: bool,
    #[serde(default = "default_error_cap")]
    pub error_cap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn default_model_dir() -> PathBuf {
    PathBuf::from("./models")
}

fn one() -> u32 {
    1
}

fn default_results_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_endpoint() -> String {
    DEFAULT_ENDPOINT.to_string()
}

fn default_error_cap() -> usize {
    crate::prompts::DEFAULT_ERROR_CAP
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(default)]
    paths: BTreeMap<String, PathBuf>,
    testing_configs: RunConfig,
}

/// Field-by-field command-line overrides; `Some` wins over the document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub paths: BTreeMap<String, PathBuf>,
    pub model_configs: Option<Vec<ModelSpec>>,
    pub model_dir: Option<PathBuf>,
    pub answers_per_task: Option<u32>,
    pub max_chain_depth: Option<u32>,
    pub datasets: Option<Vec<String>>,
    pub run_external_suite: Option<bool>,
    pub results_dir: Option<PathBuf>,
    pub device: Option<Device>,
    pub remote_code: Option<bool>,
    pub do_sample: Option<bool>,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub max_new_tokens: Option<u32>,
    pub prompt_variant: Option<String>,
    pub run_seed: Option<u64>,
    pub resume: Option<bool>,
    pub keep_artifacts: Option<bool>,
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        for (k, v) in &self.paths {
            cfg.paths.insert(k.clone(), v.clone());
        }
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = &self.$field { $target = v.clone(); })*
            };
        }
        set! {
            model_configs => cfg.model_configs,
            model_dir => cfg.model_dir,
            answers_per_task => cfg.answers_per_task,
            max_chain_depth => cfg.max_chain_depth,
            datasets => cfg.datasets,
            run_external_suite => cfg.run_external_suite,
            results_dir => cfg.results_dir,
            device => cfg.device,
            remote_code => cfg.remote_code,
            do_sample => cfg.generation.do_sample,
            temperature => cfg.generation.temperature,
            top_p => cfg.generation.top_p,
            run_seed => cfg.run_seed,
            resume => cfg.resume,
            keep_artifacts => cfg.sandbox.keep_artifacts,
        }
        if let Some(v) = self.max_new_tokens {
            cfg.generation.max_new_tokens = Some(v);
        }
        if let Some(v) = &self.prompt_variant {
            cfg.prompt_variant = Some(v.clone());
        }
    }
}

/// Registries a configuration is validated against.
#[derive(Debug, Clone)]
pub struct Registries {
    pub datasets: DatasetRegistry,
    pub templates: TemplateRegistry,
    pub prompts: PromptRegistry,
}

impl Default for Registries {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Registries {
    pub fn builtin() -> Self {
        Self {
            datasets: DatasetRegistry::with_builtins(),
            templates: TemplateRegistry::with_builtins(),
            prompts: PromptRegistry::with_builtins(),
        }
    }

    /// Copies `self` and adds the templates and prompt variants the
    /// configuration loads from files.
    pub fn extended_for(&self, cfg: &RunConfig) -> Result<Self, ConfigError> {
        let mut reg = self.clone();
        if let Some(path) = &cfg.templates_file {
            reg.templates
                .register_file(path)
                .map_err(|e: TemplateError| ConfigError::invalid("testing_configs.templates_file", e))?;
        }
        if let Some(path) = &cfg.prompt_variants_file {
            reg.prompts
                .register_file(path)
                .map_err(|e: PromptError| ConfigError::invalid("testing_configs.prompt_variants_file", e))?;
        }
        Ok(reg)
    }
}

fn parse_document(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: Document = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
        field: e.path().to_string(),
        reason: e.inner().to_string(),
    })?;
    let mut cfg = doc.testing_configs;
    cfg.paths = doc.paths;
    Ok(cfg)
}

/// Parses and validates a configuration document.
pub fn load_config(text: &str, registries: &Registries) -> Result<RunConfig, ConfigError> {
    load_config_with(text, &ConfigOverrides::default(), registries)
}

/// Parses a document, applies overrides, then validates.
pub fn load_config_with(
    text: &str,
    overrides: &ConfigOverrides,
    registries: &Registries,
) -> Result<RunConfig, ConfigError> {
    let mut cfg = parse_document(text)?;
    overrides.apply(&mut cfg);
    cfg.validate(registries)?;
    Ok(cfg)
}

pub fn load_config_file(
    path: &Path,
    overrides: &ConfigOverrides,
    registries: &Registries,
) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_config_with(&text, overrides, registries)
}

fn check_unit(field: &str, v: f64, max: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v <= max {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be in (0, {max}], got {v}")))
    }
}

impl RunConfig {
    /// Pretty JSON document in the same layout `load_config` reads.
    pub fn to_document(&self) -> String {
        let doc = Document {
            paths: self.paths.clone(),
            testing_configs: self.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("config serializes")
    }

    /// Document value, embedded in result files.
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::from_str(&self.to_document()).expect("config document is JSON")
    }

    pub fn backend_spec(&self, backend_id: &str) -> BackendSpec {
        self.backends.get(backend_id).cloned().unwrap_or_else(|| {
            let mut http = HttpBackendConfig::new(&self.default_endpoint);
            http.model = Some(backend_id.to_string());
            BackendSpec::Http(http)
        })
    }

    pub fn dataset_override(&self, dataset_id: &str) -> DatasetOverride {
        self.dataset_overrides.get(dataset_id).cloned().unwrap_or_default()
    }

    pub fn validate(&self, base: &Registries) -> Result<(), ConfigError> {
        const T: &str = "testing_configs";
        if self.answers_per_task == 0 {
            return Err(ConfigError::invalid(
                format!("{T}.answers_per_task"),
                "must be at least 1",
            ));
        }
        if self.model_configs.is_empty() {
            return Err(ConfigError::invalid(
                format!("{T}.model_configs"),
                "at least one model is required",
            ));
        }
        if self.datasets.is_empty() {
            return Err(ConfigError::invalid(
                format!("{T}.datasets"),
                "at least one dataset is required",
            ));
        }
        if self.error_cap == 0 {
            return Err(ConfigError::invalid(format!("{T}.error_cap"), "must be positive"));
        }
        let reg = base.extended_for(self)?;

        let mut names = std::collections::BTreeSet::new();
        for (i, m) in self.model_configs.iter().enumerate() {
            let field = format!("{T}.model_configs[{i}]");
            if !names.insert(crate::sandbox::sanitize(&m.to_string())) {
                return Err(ConfigError::invalid(
                    &field,
                    format!("`{m}` collides with an earlier model's result file names"),
                ));
            }
            let template = reg
                .templates
                .get(&m.template_id)
                .map_err(|e| ConfigError::invalid(&field, e))?;
            if m.conversation_type == ConversationType::Infilling && template.infilling.is_none() {
                return Err(ConfigError::invalid(
                    &field,
                    format!("template `{}` defines no infilling markers", m.template_id),
                ));
            }
            if let BackendSpec::Scripted(spec) = self.backend_spec(&m.backend_id) {
                spec.load()
                    .map_err(|e| ConfigError::invalid(format!("{T}.backends.{}", m.backend_id), e))?;
            }
        }
        for (id, spec) in &self.backends {
            if let BackendSpec::Http(h) = spec {
                if h.max_attempts == 0 || h.timeout_secs == 0 {
                    return Err(ConfigError::invalid(
                        format!("{T}.backends.{id}"),
                        "max_attempts and timeout_secs must be positive",
                    ));
                }
            }
        }

        let mut seen = std::collections::BTreeSet::new();
        for (i, d) in self.datasets.iter().enumerate() {
            let field = format!("{T}.datasets[{i}]");
            let adapter = reg
                .datasets
                .get(d)
                .map_err(|_| ConfigError::invalid(&field, format!("unknown dataset `{d}`")))?;
            if !seen.insert(d) {
                return Err(ConfigError::invalid(&field, format!("dataset `{d}` listed twice")));
            }
            if let Some(key) = adapter.root_key() {
                if let Some(p) = self.paths.get(key).filter(|p| !p.as_os_str().is_empty()) {
                    if !p.exists() {
                        return Err(ConfigError::invalid(
                            format!("paths.{key}"),
                            format!("{} does not exist (needed by {d})", p.display()),
                        ));
                    }
                }
            }
        }
        for (d, o) in &self.dataset_overrides {
            let field = format!("{T}.dataset_overrides.{d}");
            if !self.datasets.contains(d) {
                return Err(ConfigError::invalid(&field, "dataset is not selected"));
            }
            if let Some(v) = &o.prompt_variant {
                reg.prompts.get(v).map_err(|e| ConfigError::invalid(&field, e))?;
            }
            if let Some(a) = &o.analyzer {
                if a != crate::analyzers::BUILTIN_ANALYZER_ID && !self.analyzers.contains_key(a) {
                    return Err(ConfigError::invalid(&field, format!("unknown analyzer `{a}`")));
                }
            }
            if o.max_new_tokens == Some(0) || o.timeout_secs == Some(0) {
                return Err(ConfigError::invalid(&field, "limits must be positive"));
            }
        }
        if let Some(v) = &self.prompt_variant {
            reg.prompts
                .get(v)
                .map_err(|e| ConfigError::invalid(format!("{T}.prompt_variant"), e))?;
        }
        for (id, spec) in &self.analyzers {
            if spec.command.is_empty() {
                return Err(ConfigError::invalid(format!("{T}.analyzers.{id}"), "empty command"));
            }
        }

        let g = &self.generation;
        check_unit(&format!("{T}.generation_config.temperature"), g.temperature, 2.0)?;
        check_unit(&format!("{T}.generation_config.top_p"), g.top_p, 1.0)?;
        if g.max_new_tokens == Some(0) {
            return Err(ConfigError::invalid(
                format!("{T}.generation_config.max_new_tokens"),
                "must be at least 1",
            ));
        }
        self.sandbox
            .limits()
            .validate()
            .map_err(|e| ConfigError::invalid(format!("{T}.sandbox"), e))?;
        if self.run_external_suite {
            match &self.external_suite {
                Some(s) if !s.command.is_empty() => {}
                _ => {
                    return Err(ConfigError::invalid(
                        format!("{T}.external_suite"),
                        "run_external_suite is set but no command is configured",
                    ))
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            for (i, t) in sweep.temperature.iter().enumerate() {
                check_unit(&format!("{T}.sweep.temperature[{i}]"), *t, 2.0)?;
            }
            for (i, p) in sweep.top_p.iter().enumerate() {
                check_unit(&format!("{T}.sweep.top_p[{i}]"), *p, 1.0)?;
            }
            for (i, v) in sweep.prompt_variants.iter().enumerate() {
                reg.prompts
                    .get(v)
                    .map_err(|e| ConfigError::invalid(format!("{T}.sweep.prompt_variants[{i}]"), e))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LISTING: &str = r#"{
        "paths": {
            "VUL4J_ROOT": "",
            "JAVA7_PATH": "/usr/lib/jvm/jdk1.7.0_80",
            "JAVA8_PATH": "/usr/lib/jvm/jdk1.8.0_391",
            "CODEQL_PATH": ""
        },
        "testing_configs" : {
            "model_configs": [
                "TheBloke/CodeLlama-7B-Instruct-GPTQ:llama2:infilling",
                "TheBloke/CodeLlama-7B-Instruct-GPTQ:llama2:instruction"
            ],
            "model_dir": "./models",
            "answers_per_task": 1,
            "max_chain_depth": 1,
            "datasets": ["HumanEval", "LlmVul"],
            "run_cyberseceval": false,
            "results_dir": "default",
            "device": "cuda",
            "remote_code": true,
            "generation_config": {
                "do_sample": false
            }
        }
    }"#;

    /// Minimal document; `extra` is a JSON fragment of `testing_configs`
    /// entries (with a leading comma) merged over the defaults.
    fn minimal(extra: &str) -> String {
        let mut testing: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(r#"{"model_configs": ["m:llama2:instruction"], "datasets": ["HumanEval"]}"#).unwrap();
        let fragment: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&format!("{{{}}}", extra.trim_start_matches(','))).unwrap();
        testing.extend(fragment);
        serde_json::json!({ "testing_configs": testing }).to_string()
    }

    #[test]
    fn reference_layout_loads() {
        let cfg = load_config(LISTING, &Registries::builtin()).unwrap();
        assert_eq!(cfg.answers_per_task, 1);
        assert_eq!(cfg.max_chain_depth, 1);
        assert_eq!(cfg.datasets, ["HumanEval", "LlmVul"]);
        assert_eq!(cfg.device, Device::Gpu);
        assert!(cfg.remote_code && !cfg.run_external_suite && !cfg.generation.do_sample);
        assert_eq!(cfg.model_configs[0].conversation_type, ConversationType::Infilling);
        assert_eq!(cfg.model_configs[0].backend_id, "TheBloke/CodeLlama-7B-Instruct-GPTQ");
        assert_eq!(cfg.paths["JAVA8_PATH"], PathBuf::from("/usr/lib/jvm/jdk1.8.0_391"));
    }

    #[test]
    fn generation_defaults_to_greedy() {
        let cfg = load_config(&minimal(""), &Registries::builtin()).unwrap();
        assert!(!cfg.generation.do_sample);
        assert_eq!(cfg.generation.params_for(400, None).max_new_tokens, 400);
        assert_eq!(cfg.generation.params_for(400, Some(7)).max_new_tokens, 7);
    }

    #[test]
    fn errors_name_the_field() {
        let reg = Registries::builtin();
        let cases = [
            (
                minimal(r#", "answers_per_task": 0"#),
                "testing_configs.answers_per_task",
            ),
            (minimal(r#", "datasets": ["Nope"]"#), "testing_configs.datasets[0]"),
            (
                minimal(r#", "model_configs": ["m:llama2"]"#),
                "testing_configs.model_configs[0]",
            ),
            (
                minimal(r#", "model_configs": ["m:nosuch:instruction"]"#),
                "testing_configs.model_configs[0]",
            ),
            (
                minimal(r#", "model_configs": ["m:llama3:infilling"]"#),
                "testing_configs.model_configs[0]",
            ),
            (minimal(r#", "answer_per_task": 2"#), "testing_configs"),
            (
                minimal(r#", "generation_config": {"top_p": 1.5}"#),
                "testing_configs.generation_config.top_p",
            ),
            (
                minimal(r#", "run_external_suite": true"#),
                "testing_configs.external_suite",
            ),
            (
                r#"{"testing_configs": {"model_configs": [], "datasets": ["HumanEval"]}, "extra": 1}"#.to_string(),
                "extra",
            ),
        ];
        for (doc, field) in cases {
            let err = load_config(&doc, &reg).unwrap_err();
            assert!(err.field().unwrap().starts_with(field), "{doc}: {err}");
        }
        let err = load_config(&minimal(r#", "answer_per_task": 2"#), &reg).unwrap_err();
        assert!(err.to_string().contains("answer_per_task"));
        assert!(matches!(load_config("{not json", &reg), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn paths_checked_only_for_selected_datasets() {
        let reg = Registries::builtin();
        let doc = |ds: &str| {
            format!(
                r#"{{"paths": {{"VUL4J_ROOT": "/definitely/missing"}}, "testing_configs": {{"model_configs": ["m:llama2:instruction"], "datasets": ["{ds}"]}}}}"#
            )
        };
        assert!(load_config(&doc("HumanEval"), &reg).is_ok());
        let err = load_config(&doc("LlmVul"), &reg).unwrap_err();
        assert_eq!(err.field(), Some("paths.VUL4J_ROOT"));
    }

    #[test]
    fn model_spec_parsing() {
        assert_eq!(
            parse_model_spec("m:llama2:instruction").unwrap(),
            ModelSpec {
                backend_id: "m".into(),
                template_id: "llama2".into(),
                conversation_type: ConversationType::Instruction
            }
        );
        assert_eq!(
            parse_model_spec("m:deepseek:infilling").unwrap().conversation_type,
            ConversationType::Infilling
        );
        assert_eq!(
            parse_model_spec("m:llama2"),
            Err(ModelSpecError::Arity("m:llama2".into()))
        );
        assert!(matches!(
            parse_model_spec("m:llama2:chat"),
            Err(ModelSpecError::ConversationType(_))
        ));
        assert!(matches!(
            parse_model_spec("a:b:c:instruction"),
            Err(ModelSpecError::Arity(_))
        ));
    }

    #[test]
    fn overrides_win() {
        let o = ConfigOverrides {
            answers_per_task: Some(5),
            temperature: Some(0.32),
            datasets: Some(vec!["SecurityEval".into()]),
            ..Default::default()
        };
        let cfg = load_config_with(&minimal(r#", "answers_per_task": 2"#), &o, &Registries::builtin()).unwrap();
        assert_eq!(cfg.answers_per_task, 5);
        assert_eq!(cfg.generation.temperature, 0.32);
        assert_eq!(cfg.datasets, ["SecurityEval"]);
        let bad = ConfigOverrides {
            answers_per_task: Some(0),
            ..Default::default()
        };
        assert!(load_config_with(&minimal(""), &bad, &Registries::builtin()).is_err());
    }

    #[test]
    fn backend_specs() {
        let doc = minimal(
            r#", "backends": {"m": {"kind": "scripted", "behavior": {"default": "x"}}, "h": {"kind": "http", "url": "http://localhost:1"}}"#,
        );
        let cfg = load_config(&doc, &Registries::builtin()).unwrap();
        assert!(matches!(cfg.backend_spec("m"), BackendSpec::Scripted(_)));
        match cfg.backend_spec("other") {
            BackendSpec::Http(h) => {
                assert_eq!(h.url, DEFAULT_ENDPOINT);
                assert_eq!(h.model.as_deref(), Some("other"));
            }
            other => panic!("{other:?}"),
        }
        let bad = minimal(r#", "backends": {"m": {"kind": "scripted", "behavior": {"default": "x"}, "oops": 1}}"#);
        assert!(load_config(&bad, &Registries::builtin()).is_err());
    }

    #[test]
    fn deterministic_and_round_trips() {
        let reg = Registries::builtin();
        let a = load_config(LISTING, &reg).unwrap();
        assert_eq!(a, load_config(LISTING, &reg).unwrap());
        assert_eq!(load_config(&a.to_document(), &reg).unwrap(), a);
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        let datasets = proptest::sample::subsequence(vec!["HumanEval", "QuixBugs-python", "SecurityEval"], 1..=3);
        let models = proptest::collection::vec(
            (
                "[a-z][a-z0-9/_.-]{0,12}",
                prop_oneof![Just("llama2"), Just("deepseek"), Just("raw"), Just("llama3")],
                any::<bool>(),
            ),
            1..3,
        );
        (
            datasets,
            models,
            1u32..20,
            0u32..4,
            any::<bool>(),
            any::<bool>(),
            (1u32..200, 1u32..100, proptest::option::of(1u32..4000)),
            any::<u64>(),
            proptest::option::of(prop_oneof![Just("cg-default"), Just("sensitivity-3")]),
        )
            .prop_map(
                |(ds, models, n, depth, sample, remote, (t, p, tokens), seed, variant)| {
                    let base = load_config(&minimal(""), &Registries::builtin()).unwrap();
                    RunConfig {
                        model_configs: models
                            .into_iter()
                            .map(|(b, t, fill)| ModelSpec {
                                backend_id: b,
                                template_id: t.to_string(),
                                conversation_type: if fill && t != "llama3" {
                                    ConversationType::Infilling
                                } else {
                                    ConversationType::Instruction
                                },
                            })
                            .collect(),
                        datasets: ds.into_iter().map(str::to_string).collect(),
                        answers_per_task: n,
                        max_chain_depth: depth,
                        remote_code: remote,
                        generation: GenerationDefaults {
                            do_sample: sample,
                            temperature: t as f64 / 100.0,
                            top_p: p as f64 / 100.0,
                            max_new_tokens: tokens,
                        },
                        run_seed: seed,
                        prompt_variant: variant.map(str::to_string),
                        ..base
                    }
                },
            )
    }

    proptest! {
        #[test]
        fn load_inverts_serialize(cfg in arb_config()) {
            let reg = Registries::builtin();
            cfg.validate(&reg).unwrap();
            prop_assert_eq!(load_config(&cfg.to_document(), &reg).unwrap(), cfg);
        }
    }
}
