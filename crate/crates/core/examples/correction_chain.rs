//! A backend that fails first and fixes its answer after seeing the error.

use std::sync::Arc;

use codeeval::backend::{ScriptedBackend, ScriptedBehavior};
use codeeval::config::{load_config, Registries};
use codeeval::datasets::{DatasetEnv, DatasetRegistry, QUIXBUGS_PYTHON};
use codeeval::orchestrator::Evaluator;

pub fn main() {
    let results = tempfile::tempdir().unwrap();
    let tasks = DatasetRegistry::with_builtins()
        .load_prompts(QUIXBUGS_PYTHON, &DatasetEnv::default())
        .unwrap();
    let behavior = tasks.iter().fold(ScriptedBehavior::new(""), |b, t| {
        b.respond(
            &t.task_id,
            None,
            Some(0),
            format!("```python\n{}\n```", t.source_code.clone().unwrap()),
        )
        .respond(
            &t.task_id,
            None,
            Some(1),
            format!("```python\n{}\n```", t.reference_solution.clone().unwrap()),
        )
    });

    for depth in [0, 1] {
        let doc = serde_json::json!({"testing_configs": {
            "model_configs": ["fixer:deepseek:instruction"],
            "datasets": [QUIXBUGS_PYTHON],
            "max_chain_depth": depth,
            "results_dir": results.path(),
            "dataset_overrides": {QUIXBUGS_PYTHON: {"timeout_secs": 2}},
        }});
        let registries = Registries::builtin();
        let cfg = load_config(&doc.to_string(), &registries).unwrap();
        let outcome = Evaluator::new(cfg, &registries)
            .unwrap()
            .with_backend("fixer", Arc::new(ScriptedBackend::new("fixer", behavior.clone())))
            .run()
            .unwrap();
        let record = &outcome.records[0];
        println!(
            "max_chain_depth={depth}: pass@1 {:.1}%",
            record.summary.pass_at_k[&1] * 100.0
        );
        for a in &record.answers {
            let v = a.verdict.as_ref().unwrap();
            println!("  {:<28} depth {} -> {}", a.task_id, a.chain_depth, v.detail);
        }
        if depth == 1 {
            let fix = record.answers.iter().find(|a| a.chain_depth == 1).unwrap();
            println!("--- last correction message\n{}", fix.messages.last().unwrap().content);
        }
    }
}
