//! Parses a configuration document, applies overrides and prints the
//! effective document.

use codeeval::config::{load_config_with, ConfigOverrides, Registries};

const DOC: &str = r#"{
    "paths": {"VUL4J_ROOT": "", "JAVA8_PATH": "/usr/lib/jvm/jdk1.8.0_391"},
    "testing_configs": {
        "model_configs": [
            "codellama-7b:llama2:infilling",
            "codellama-7b:llama2:instruction"
        ],
        "model_dir": "./models",
        "answers_per_task": 1,
        "max_chain_depth": 1,
        "datasets": ["HumanEval", "LlmVul"],
        "run_cyberseceval": false,
        "results_dir": "results",
        "device": "cuda",
        "remote_code": true,
        "generation_config": {"do_sample": false}
    }
}"#;

pub fn main() {
    let registries = Registries::builtin();
    let overrides = ConfigOverrides {
        answers_per_task: Some(10),
        ..Default::default()
    };
    let cfg = load_config_with(DOC, &overrides, &registries).unwrap();
    for m in &cfg.model_configs {
        println!(
            "model {} via template {} ({:?})",
            m.backend_id, m.template_id, m.conversation_type
        );
    }
    println!("{}", cfg.to_document());

    let broken = DOC.replace("\"answers_per_task\": 1", "\"answers_per_task\": 0");
    println!(
        "rejected: {}",
        load_config_with(&broken, &ConfigOverrides::default(), &registries).unwrap_err()
    );
}
