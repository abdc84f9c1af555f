//! The deterministic scripted backend used for offline runs and tests.

use codeeval::backend::{
    throughput, Backend, GenerationParams, GenerationRequest, RequestContext, ScriptedBackend, ScriptedBehavior,
};

pub fn main() {
    let behavior = ScriptedBehavior::from_document(
        r#"{
            "default": "I cannot help with that.",
            "tokens_per_second": 40,
            "responses": [
                {"task_id": "t1", "depth": 0, "text": "```python\nreturn a - b\n```"},
                {"task_id": "t1", "depth": 1, "text": "```python\nreturn a + b\n```"},
                {"task_id": "*", "attempt": 3, "text": "fourth attempt, any task"}
            ]
        }"#,
    )
    .unwrap();
    let backend = ScriptedBackend::new("stub", behavior);
    let params = GenerationParams::default();
    for (task, attempt, depth) in [("t1", 0, 0), ("t1", 0, 1), ("t2", 3, 0), ("t2", 0, 0)] {
        let context = RequestContext {
            task_id: task.into(),
            attempt_index: attempt,
            chain_depth: depth,
        };
        let r = backend
            .generate(&GenerationRequest {
                prompt: "prompt",
                params: &params,
                context: &context,
            })
            .unwrap();
        println!(
            "{task} attempt {attempt} depth {depth}: {:?} ({} tokens, {:.1} tokens/s)",
            r.text,
            r.completion_tokens,
            throughput(&r).unwrap()
        );
    }
}
