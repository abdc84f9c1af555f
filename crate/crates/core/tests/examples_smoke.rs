//! Every example runs to completion.

#[path = "../examples/build_prompts.rs"]
mod build_prompts;
#[path = "../examples/chat_templates.rs"]
mod chat_templates;
#[path = "../examples/correction_chain.rs"]
mod correction_chain;
#[path = "../examples/datasets.rs"]
mod datasets;
#[path = "../examples/evaluate_oracle.rs"]
mod evaluate_oracle;
#[path = "../examples/extract_code.rs"]
mod extract_code;
#[path = "../examples/http_backend.rs"]
#[allow(dead_code)]
mod http_backend;
#[path = "../examples/load_config.rs"]
mod load_config;
#[path = "../examples/parameter_sweep.rs"]
mod parameter_sweep;
#[path = "../examples/pass_at_k.rs"]
mod pass_at_k;
#[path = "../examples/sandbox_exec.rs"]
mod sandbox_exec;
#[path = "../examples/scripted_backend.rs"]
mod scripted_backend;
#[path = "../examples/security_scan.rs"]
mod security_scan;

#[test]
fn pure_examples() {
    pass_at_k::main();
    chat_templates::main();
    extract_code::main();
    build_prompts::main();
    scripted_backend::main();
    security_scan::main();
    load_config::main();
}

#[test]
fn http_example() {
    http_backend::run(None);
}

#[test]
fn sandbox_examples() {
    sandbox_exec::main();
    datasets::main();
}

#[test]
fn evaluation_examples() {
    evaluate_oracle::main();
    parameter_sweep::main();
    correction_chain::main();
}
