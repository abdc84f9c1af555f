//! Loads the bundled mini-suites and checks each shipped reference answer.

use std::sync::Arc;

use codeeval::datasets::{DatasetEnv, DatasetRegistry};
use codeeval::sandbox::{SandboxHandle, SandboxLimits};

pub fn main() {
    let registry = DatasetRegistry::with_builtins();
    let sandbox = Arc::new(SandboxHandle::new(None, SandboxLimits::default()).unwrap());
    for id in registry.ids() {
        let adapter = registry.get(id).unwrap();
        let root = registry.resolve_root(id, &Default::default()).unwrap();
        let env = DatasetEnv {
            paths: Default::default(),
            root: root.clone(),
        };
        let tasks = adapter.load_prompts(id, &root, &env).unwrap();
        let mut passed = 0;
        let mut checked = 0;
        let mut skipped = 0;
        for task in &tasks {
            if task.skip.is_some() {
                skipped += 1;
                continue;
            }
            let Some(reference) = &task.reference_solution else {
                continue;
            };
            let ws = sandbox.workspace(&[id, &task.task_id]).unwrap();
            let verdict = adapter.test_answer(task, reference, &sandbox, &ws, &env).unwrap();
            sandbox.release(&ws);
            checked += 1;
            passed += usize::from(verdict.is_pass());
        }
        println!(
            "{id:<16} area={} tasks={:<3} references passing={passed}/{checked} skipped={skipped}",
            adapter.area(),
            tasks.len()
        );
    }
}
