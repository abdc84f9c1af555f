use std::path::Path;
use std::process::{Command, Output};

fn codeeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codeeval"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, backend: serde_json::Value) -> String {
    let path = dir.join("config.json");
    let doc = serde_json::json!({
        "paths": {},
        "testing_configs": {
            "model_configs": ["stub:llama2:instruction"],
            "answers_per_task": 2,
            "max_chain_depth": 0,
            "datasets": ["SecurityEval"],
            "results_dir": dir.join("results"),
            "generation_config": {"do_sample": false},
            "backends": {"stub": backend},
        }
    });
    std::fs::write(&path, doc.to_string()).unwrap();
    path.display().to_string()
}

#[test]
fn run_report_and_resume_with_scripted_backend() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = tmp.path().join("stub.json");
    std::fs::write(
        &fixture,
        serde_json::json!({
            "default": "```python\nimport json\nprint(json.dumps([1, 2]))\n```",
            "responses": [{"task_id": "*", "attempt": 1, "text": "```python\nimport os\nos.system('rm -rf ' + path)\n```"}]
        })
        .to_string(),
    )
    .unwrap();
    let config = write_config(tmp.path(), serde_json::json!({"kind": "scripted", "fixture": fixture}));

    let validated = codeeval(&["validate-config", "--config", &config]);
    assert!(validated.status.success(), "{validated:?}");

    let run = codeeval(&["run", "--config", &config]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let results = tmp.path().join("results");
    assert!(results.join("run_manifest.json").is_file());

    let report = codeeval(&[
        "report",
        "--results-dir",
        results.to_str().unwrap(),
        "--metrics",
        "pass@1,pass@2,tasks",
        "--format",
        "csv",
    ]);
    assert!(report.status.success());
    // one clean and one flagged answer per task
    assert_eq!(
        stdout(&report),
        "Model,Pass@1,Pass@2,Tasks\nstub:llama2:instruction,50.0%,100.0%,5\n"
    );

    let too_many = codeeval(&[
        "report",
        "--results-dir",
        results.to_str().unwrap(),
        "--metrics",
        "pass@10",
    ]);
    assert!(!too_many.status.success());
    assert!(String::from_utf8_lossy(&too_many.stderr).contains("k exceeds answers_per_task"));

    let detail = std::fs::read_dir(&results)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with("__detail.json"))
        .unwrap();
    let before = std::fs::read(&detail).unwrap();
    let resumed = codeeval(&["run", "--config", &config, "--resume"]);
    assert!(resumed.status.success());
    assert_eq!(std::fs::read(&detail).unwrap(), before);
}

#[test]
fn unreachable_backend_exits_with_backend_code() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        serde_json::json!({"kind": "http", "url": "http://127.0.0.1:1", "max_attempts": 1}),
    );
    let run = codeeval(&["run", "--config", &config]);
    assert_eq!(run.status.code(), Some(3), "{run:?}");
}

#[test]
fn invalid_config_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        serde_json::json!({"kind": "scripted", "behavior": {"default": ""}}),
    );
    let run = codeeval(&["validate-config", "--config", &config, "--answers-per-task", "0"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("testing_configs.answers_per_task"));
}

#[test]
fn scan_fixture_files() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/analyzers");
    let vulnerable = codeeval(&["scan", dir.join("vulnerable/cwe89_lookup.py").to_str().unwrap()]);
    assert_eq!(vulnerable.status.code(), Some(1));
    assert!(stdout(&vulnerable).starts_with("cwe89_lookup.py:7:CWE-89/sql-format:"));
    let clean = codeeval(&["scan", dir.join("clean/lookup.py").to_str().unwrap()]);
    assert!(clean.status.success());
    assert!(stdout(&clean).is_empty());
}
