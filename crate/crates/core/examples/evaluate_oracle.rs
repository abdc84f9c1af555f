//! End to end: a scripted backend answering every bundled HumanEval-format
//! task with its reference, results persisted and reported.

use std::sync::Arc;

use codeeval::backend::{ScriptedBackend, ScriptedBehavior};
use codeeval::config::{load_config, Registries};
use codeeval::datasets::{DatasetEnv, DatasetRegistry, HUMANEVAL};
use codeeval::orchestrator::Evaluator;
use codeeval::report::{cmd_report, parse_metrics, GroupBy, OutputFormat, ReportRequest};

pub fn main() {
    let results = tempfile::tempdir().unwrap();
    let tasks = DatasetRegistry::with_builtins()
        .load_prompts(HUMANEVAL, &DatasetEnv::default())
        .unwrap();
    let behavior = tasks.iter().fold(ScriptedBehavior::new("no idea"), |b, t| {
        let code = t.reference_solution.clone().unwrap();
        b.respond(&t.task_id, None, None, format!("```python\n{code}\n```"))
    });

    let doc = serde_json::json!({"testing_configs": {
        "model_configs": ["oracle:llama2:instruction"],
        "datasets": [HUMANEVAL, "SecurityEval"],
        "results_dir": results.path(),
    }});
    let registries = Registries::builtin();
    let cfg = load_config(&doc.to_string(), &registries).unwrap();
    let outcome = Evaluator::new(cfg, &registries)
        .unwrap()
        .with_backend("oracle", Arc::new(ScriptedBackend::new("oracle", behavior)))
        .run()
        .unwrap();
    for f in &outcome.manifest.files {
        println!("{} {}", &f.sha256[..12], f.file);
    }

    let request = ReportRequest {
        results_dir: results.path().to_path_buf(),
        metrics: parse_metrics("pass@1,pass_rate,tokens/s,tasks").unwrap(),
        group_by: GroupBy::Dataset,
        format: OutputFormat::Table,
    };
    print!("{}", cmd_report(&request).unwrap());
}
