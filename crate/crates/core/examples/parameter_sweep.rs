//! Temperature by top-p grid against the scripted backend, reported as one
//! table row per combination.

use std::sync::Arc;

use codeeval::backend::{ScriptedBackend, ScriptedBehavior};
use codeeval::config::{load_config, Registries};
use codeeval::orchestrator::Evaluator;
use codeeval::report::{cmd_report, parse_metrics, GroupBy, OutputFormat, ReportRequest};

pub fn main() {
    let results = tempfile::tempdir().unwrap();
    let doc = serde_json::json!({"testing_configs": {
        "model_configs": ["stub:llama2:instruction"],
        "datasets": ["SecurityEval"],
        "results_dir": results.path(),
        "generation_config": {"do_sample": true},
        "sweep": {"temperature": [0.32, 0.56, 0.8], "top_p": [0.38, 0.665, 0.95]},
    }});
    let registries = Registries::builtin();
    let cfg = load_config(&doc.to_string(), &registries).unwrap();
    let stub = ScriptedBehavior::new("```python\nimport json\nprint(json.dumps({}))\n```");
    let runs = Evaluator::new(cfg, &registries)
        .unwrap()
        .with_backend("stub", Arc::new(ScriptedBackend::new("stub", stub)))
        .run_sweep()
        .unwrap();
    println!("{} sweep points", runs.len());
    let request = ReportRequest {
        results_dir: results.path().to_path_buf(),
        metrics: parse_metrics("pass@1,tokens/s").unwrap(),
        group_by: GroupBy::Model,
        format: OutputFormat::Csv,
    };
    print!("{}", cmd_report(&request).unwrap());
}
