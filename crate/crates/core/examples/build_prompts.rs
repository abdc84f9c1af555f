//! Prompt construction for a repair task and one correction round.

use std::time::Duration;

use codeeval::datasets::{Area, TaskRecord, TestKind, TestSpec};
use codeeval::prompts::{build_apr_prompt, build_correction_prompt, PreviousAttempt, PromptRegistry, APR_DEFAULT};
use codeeval::templating::TemplateRegistry;

pub fn main() {
    let task = TaskRecord {
        task_id: "demo/gcd".into(),
        dataset_id: "demo".into(),
        area: Area::Apr,
        language: "python".into(),
        description: String::new(),
        source_code: Some("def gcd(a, b):\n    if b == 0:\n        return a\n    return gcd(a % b, b)\n".into()),
        test_spec: TestSpec {
            kind: TestKind::UnitSuite,
            entry: "pytest".into(),
            timeout: Duration::from_secs(10),
        },
        reference_solution: None,
        extra: Default::default(),
        skip: None,
    };
    let prompts = PromptRegistry::with_builtins();
    println!("variants: {}", prompts.ids().collect::<Vec<_>>().join(", "));

    let bundle = build_apr_prompt(&task, prompts.get(APR_DEFAULT).unwrap()).unwrap();
    let llama2 = TemplateRegistry::with_builtins().get("llama2").unwrap().clone();
    println!("--- initial prompt\n{}", llama2.render(&bundle.messages).unwrap());

    let reply = "```python\ndef gcd(a, b):\n    return gcd(a % b, b)\n```";
    let errors = "RecursionError: maximum recursion depth exceeded";
    let previous = PreviousAttempt {
        raw_response: reply,
        chain_depth: 0,
        passed: false,
    };
    let next = build_correction_prompt(&bundle, previous, errors, 1, 2000).unwrap();
    println!(
        "--- correction prompt ({} messages)\n{}",
        next.messages.len(),
        llama2.render(&next.messages).unwrap()
    );
}
