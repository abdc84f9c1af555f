//! Runs untrusted snippets with a wall-clock limit and an output cap.

use std::time::Duration;

use codeeval::sandbox::{CommandSpec, SandboxHandle, SandboxLimits};

pub fn main() {
    let limits = SandboxLimits {
        wall_time: Duration::from_secs(2),
        output_cap: 4096,
        ..SandboxLimits::default()
    };
    let sandbox = SandboxHandle::new(None, limits).unwrap();
    println!("network isolated: {}", sandbox.network_isolated());

    let cases = [
        ("ok", "print('hello from the sandbox')"),
        ("loop", "while True:\n    pass"),
        ("flood", "print('x' * 1_000_000)"),
        ("crash", "raise SystemExit(3)"),
    ];
    for (name, code) in cases {
        let ws = sandbox.workspace(&["demo", name]).unwrap();
        std::fs::write(ws.join("main.py"), code).unwrap();
        let outcome = sandbox
            .run_command(&CommandSpec::new("python3", ["main.py"]), &ws)
            .unwrap();
        println!(
            "{name:<6} exit={:<4} timed_out={:<5} stdout={} bytes (truncated {}) in {:.2?}",
            outcome.exit_status,
            outcome.timed_out,
            outcome.stdout.len(),
            outcome.stdout_truncated,
            outcome.duration
        );
        sandbox.release(&ws);
    }
}
