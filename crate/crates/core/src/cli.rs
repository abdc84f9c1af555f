//! Command-line interface.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 a model's
//! backend failed, 4 results could not be written or verified.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analyzers::{format_line_report, scan, RuleSet};
use crate::config::{load_config_file, ConfigOverrides, Device, ModelSpec, Registries, RunConfig};
use crate::datasets::DatasetEnv;
use crate::metrics::format_percent;
use crate::orchestrator::{Evaluator, OrchestratorError, RunOutcome};
use crate::report::{cmd_report, parse_metrics, GroupBy, OutputFormat, ReportError, ReportRequest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_PERSISTENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "codeeval",
    version,
    about = "Evaluate LLM code generation, program repair and secure coding"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an evaluation.
    Run(ConfigArgs),
    /// Print a table or CSV from a results directory.
    Report(ReportArgs),
    /// Load and validate a configuration without running it.
    ValidateConfig(ConfigArgs),
    /// List registered datasets with their task counts.
    ListDatasets(OptionalConfig),
    /// List chat templates.
    ListTemplates(OptionalConfig),
    /// Scan a source file with the built-in pattern analyzer.
    Scan(ScanArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Configuration document (JSON).
    #[arg(short, long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: OverrideArgs,
}

#[derive(Debug, Args)]
pub struct OptionalConfig {
    #[arg(short, long)]
    pub config: Option<PathBuf>,
}

/// Flags mirroring configuration fields; each replaces the document value.
#[derive(Debug, Args, Default)]
pub struct OverrideArgs {
    /// `backend:template:type`; repeat for several models.
    #[arg(long = "model")]
    pub models: Vec<ModelSpec>,
    #[arg(long = "dataset")]
    pub datasets: Vec<String>,
    /// Dependency path, `KEY=VALUE`.
    #[arg(long = "path", value_parser = parse_key_value)]
    pub paths: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    #[arg(long)]
    pub answers_per_task: Option<u32>,
    #[arg(long)]
    pub max_chain_depth: Option<u32>,
    #[arg(long)]
    pub results_dir: Option<PathBuf>,
    #[arg(long)]
    pub run_external_suite: Option<bool>,
    #[arg(long)]
    pub device: Option<DeviceArg>,
    #[arg(long)]
    pub remote_code: Option<bool>,
    #[arg(long)]
    pub do_sample: Option<bool>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub max_new_tokens: Option<u32>,
    #[arg(long)]
    pub prompt_variant: Option<String>,
    #[arg(long)]
    pub run_seed: Option<u64>,
    /// Reuse completed (model, dataset) results in the results directory.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub keep_artifacts: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DeviceArg {
    Gpu,
    Cuda,
    Cpu,
}

fn parse_key_value(s: &str) -> Result<(String, PathBuf), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    Ok((k.to_string(), PathBuf::from(v)))
}

impl OverrideArgs {
    pub fn to_overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            paths: self.paths.iter().cloned().collect::<BTreeMap<_, _>>(),
            model_configs: (!self.models.is_empty()).then(|| self.models.clone()),
            model_dir: self.model_dir.clone(),
            answers_per_task: self.answers_per_task,
            max_chain_depth: self.max_chain_depth,
            datasets: (!self.datasets.is_empty()).then(|| self.datasets.clone()),
            run_external_suite: self.run_external_suite,
            results_dir: self.results_dir.clone(),
            device: self.device.map(|d| match d {
                DeviceArg::Gpu | DeviceArg::Cuda => Device::Gpu,
                DeviceArg::Cpu => Device::Cpu,
            }),
            remote_code: self.remote_code,
            do_sample: self.do_sample,
            temperature: self.temperature,
            top_p: self.top_p,
            max_new_tokens: self.max_new_tokens,
            prompt_variant: self.prompt_variant.clone(),
            run_seed: self.run_seed,
            resume: self.resume.then_some(true),
            keep_artifacts: self.keep_artifacts.then_some(true),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GroupByArg {
    Model,
    Dataset,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Table,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub results_dir: PathBuf,
    /// Comma-separated: pass@K, pass_rate, tokens/s, total_tokens, tasks, skipped.
    #[arg(long, default_value = "pass@1,pass_rate,tokens/s")]
    pub metrics: String,
    #[arg(long, value_enum, default_value = "model")]
    pub group_by: GroupByArg,
    #[arg(long, value_enum, default_value = "table")]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    pub file: PathBuf,
    /// Rule file replacing the bundled rules.
    #[arg(long)]
    pub rules: Option<PathBuf>,
}

fn load(args: &ConfigArgs, err: &mut dyn Write) -> Result<(RunConfig, Registries), i32> {
    let registries = Registries::builtin();
    match load_config_file(&args.config, &args.overrides.to_overrides(), &registries) {
        Ok(cfg) => Ok((cfg, registries)),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            Err(EXIT_CONFIG)
        }
    }
}

fn orchestrator_exit(e: &OrchestratorError) -> i32 {
    match e {
        OrchestratorError::Config(_) => EXIT_CONFIG,
        OrchestratorError::Persistence { .. }
        | OrchestratorError::Integrity { .. }
        | OrchestratorError::MissingManifest(_) => EXIT_PERSISTENCE,
        e if e.is_backend() => EXIT_BACKEND,
        _ => EXIT_FAILURE,
    }
}

fn print_outcome(outcome: &RunOutcome, label: &str, out: &mut dyn Write) {
    for r in &outcome.records {
        let s = &r.summary;
        let pass1 = s
            .pass_at_k
            .get(&1)
            .map_or_else(|| "n/a".to_string(), |v| format_percent(*v));
        let _ = writeln!(
            out,
            "{label}{} / {}: pass@1 {pass1}, pass rate {}, {:.1} tokens/s, {} tasks, {} skipped",
            r.model,
            r.dataset_id,
            format_percent(s.pass_rate),
            s.tokens_per_second,
            s.tasks,
            s.skipped
        );
    }
    for s in &outcome.skips {
        let _ = writeln!(
            out,
            "{label}skipped {}{}: {}",
            s.model,
            s.dataset.as_deref().map(|d| format!(" / {d}")).unwrap_or_default(),
            s.reason
        );
    }
}

fn cmd_run(args: &ConfigArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (cfg, registries) = match load(args, err) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let sweep = cfg.sweep.is_some();
    let results_dir = cfg.results_dir.clone();
    let evaluator = match Evaluator::new(cfg, &registries) {
        Ok(e) => e,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return orchestrator_exit(&e);
        }
    };
    let outcomes = if sweep {
        evaluator.run_sweep().map(|runs| {
            runs.into_iter()
                .map(|r| (format!("[{}] ", r.point.label()), r.outcome))
                .collect::<Vec<_>>()
        })
    } else {
        evaluator.run().map(|o| vec![(String::new(), o)])
    };
    match outcomes {
        Ok(outcomes) => {
            let mut aborted = false;
            for (label, o) in &outcomes {
                print_outcome(o, label, out);
                aborted |= o.aborted_models().next().is_some();
            }
            let _ = writeln!(out, "results written to {}", results_dir.display());
            if aborted {
                EXIT_BACKEND
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            orchestrator_exit(&e)
        }
    }
}

fn cmd_validate(args: &ConfigArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match load(args, err) {
        Ok((cfg, _)) => {
            let _ = writeln!(
                out,
                "configuration valid: {} model(s), {} dataset(s), {} answer(s) per task, chain depth {}",
                cfg.model_configs.len(),
                cfg.datasets.len(),
                cfg.answers_per_task,
                cfg.max_chain_depth
            );
            let _ = write!(out, "{}", cfg.to_document());
            let _ = writeln!(out);
            EXIT_OK
        }
        Err(code) => code,
    }
}

fn registries_for(
    config: Option<&PathBuf>,
    err: &mut dyn Write,
) -> Result<(Registries, BTreeMap<String, PathBuf>), i32> {
    let base = Registries::builtin();
    let Some(path) = config else {
        return Ok((base, BTreeMap::new()));
    };
    let loaded = load_config_file(path, &ConfigOverrides::default(), &base)
        .and_then(|cfg| Ok((base.extended_for(&cfg)?, cfg.paths)));
    loaded.map_err(|e| {
        let _ = writeln!(err, "error: {e}");
        EXIT_CONFIG
    })
}

fn cmd_list_datasets(args: &OptionalConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (reg, paths) = match registries_for(args.config.as_ref(), err) {
        Ok(v) => v,
        Err(code) => return code,
    };
    for id in reg.datasets.ids() {
        let adapter = reg.datasets.get(id).expect("listed id");
        let env = DatasetEnv {
            paths: paths.clone(),
            root: PathBuf::new(),
        };
        let tasks = match reg.datasets.load_prompts(id, &env) {
            Ok(tasks) => {
                let skipped = tasks.iter().filter(|t| t.skip.is_some()).count();
                format!("{} tasks ({skipped} skipped here)", tasks.len())
            }
            Err(e) => format!("unavailable: {e}"),
        };
        let _ = writeln!(out, "{id}\t{}\t{:?}\t{}", adapter.area(), adapter.prompt_style(), tasks);
    }
    EXIT_OK
}

fn cmd_list_templates(args: &OptionalConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (reg, _) = match registries_for(args.config.as_ref(), err) {
        Ok(v) => v,
        Err(code) => return code,
    };
    for id in reg.templates.ids() {
        let t = reg.templates.get(id).expect("listed id");
        let modes = if t.infilling.is_some() {
            "instruction, infilling"
        } else {
            "instruction"
        };
        let _ = writeln!(out, "{id}\t{modes}");
    }
    for id in reg.prompts.ids() {
        let _ = writeln!(out, "prompt variant: {id}");
    }
    EXIT_OK
}

fn cmd_report_args(args: &ReportArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let request = parse_metrics(&args.metrics).map(|metrics| ReportRequest {
        results_dir: args.results_dir.clone(),
        metrics,
        group_by: match args.group_by {
            GroupByArg::Model => GroupBy::Model,
            GroupByArg::Dataset => GroupBy::Dataset,
        },
        format: match args.format {
            FormatArg::Table => OutputFormat::Table,
            FormatArg::Csv => OutputFormat::Csv,
        },
    });
    match request.and_then(|r| cmd_report(&r)) {
        Ok(text) => {
            let _ = write!(out, "{text}");
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                ReportError::Results(e) => orchestrator_exit(&e),
                _ => EXIT_FAILURE,
            }
        }
    }
}

fn cmd_scan(args: &ScanArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let rules = match &args.rules {
        Some(p) => match RuleSet::from_file(p) {
            Ok(r) => r,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return EXIT_CONFIG;
            }
        },
        None => RuleSet::builtin(),
    };
    let source = match std::fs::read_to_string(&args.file) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", args.file.display());
            return EXIT_FAILURE;
        }
    };
    let name = args
        .file
        .file_name()
        .map_or_else(|| args.file.display().to_string(), |n| n.to_string_lossy().into_owned());
    let findings = scan(rules.rules(), &source, &name);
    let _ = write!(out, "{}", format_line_report(&findings));
    if findings.is_empty() {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    match &cli.command {
        Command::Run(a) => cmd_run(a, out, err),
        Command::Report(a) => cmd_report_args(a, out, err),
        Command::ValidateConfig(a) => cmd_validate(a, out, err),
        Command::ListDatasets(a) => cmd_list_datasets(a, out, err),
        Command::ListTemplates(a) => cmd_list_templates(a, out, err),
        Command::Scan(a) => cmd_scan(a, out, err),
    }
}
