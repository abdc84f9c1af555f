//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use codeeval::analyzers::{ReportFormat, RuleSet, BUILTIN_ANALYZER_ID};
use codeeval::backend::{ScriptedBackend, ScriptedBehavior};
use codeeval::config::{load_config, Registries, RunConfig};
use codeeval::datasets::{
    DatasetEnv, DatasetRegistry, TaskRecord, HUMANEVAL, QUIXBUGS_JAVA, QUIXBUGS_PYTHON, SECURITYEVAL,
};
use codeeval::extraction::{extract_code, ExtractionMethod};
use codeeval::metrics::{format_percent, pass_at_k, pass_rate, MetricsError, TaskSample};
use codeeval::orchestrator::{load_manifest, load_summaries, load_sweep_index, sha256_hex, Evaluator};
use codeeval::report::{build_report, parse_metrics, GroupBy, OutputFormat, ReportError, ReportRequest};
use codeeval::sandbox::{process_group_alive, AnalyzerCommandSpec, SandboxError, SandboxHandle, SandboxLimits};
use codeeval::templating::{Message, TemplateRegistry};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn fenced(code: &str) -> String {
    format!("Here is the code:\n```python\n{code}\n```\nDone.")
}

fn humaneval_tasks() -> Vec<TaskRecord> {
    DatasetRegistry::with_builtins()
        .load_prompts(HUMANEVAL, &DatasetEnv::default())
        .unwrap()
}

fn run_config(dir: &Path, model: &str, datasets: &[&str], extra: serde_json::Value) -> RunConfig {
    let mut doc = serde_json::json!({"testing_configs": {
        "model_configs": [format!("{model}:llama2:instruction")],
        "datasets": datasets,
        "results_dir": dir,
        "generation_config": {"do_sample": false},
    }});
    if let serde_json::Value::Object(extra) = extra {
        doc["testing_configs"].as_object_mut().unwrap().extend(extra);
    }
    load_config(&doc.to_string(), &Registries::builtin()).unwrap()
}

fn evaluator(cfg: RunConfig, model: &str, behavior: ScriptedBehavior) -> Evaluator {
    Evaluator::new(cfg, &Registries::builtin())
        .unwrap()
        .with_backend(model, Arc::new(ScriptedBackend::new(model, behavior)))
}

/// Fraction of the C(n, k) subsets that contain at least one of the first
/// `c` (correct) samples.
fn brute_force(n: u32, c: u32, k: u32) -> f64 {
    let correct_mask = (1u32 << c) - 1;
    let (mut hits, mut total) = (0u64, 0u64);
    for subset in 0u32..(1 << n) {
        if subset.count_ones() == k {
            total += 1;
            hits += u64::from(subset & correct_mask != 0);
        }
    }
    hits as f64 / total as f64
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut cases = 0;
    for n in 1..=8 {
        for c in 0..=n {
            let sample = TaskSample::new("t", n, c).unwrap();
            for k in 1..=n {
                let got = pass_at_k(&sample, k).map_err(|e| e.to_string())?;
                let want = brute_force(n, c, k);
                ensure!((got - want).abs() <= 1e-12, "n={n} c={c} k={k}: {got} vs {want}");
                cases += 1;
            }
        }
    }
    let anchor = pass_at_k(&TaskSample::new("t", 5, 2).unwrap(), 2).unwrap();
    ensure!((anchor - 0.7).abs() <= 1e-12, "anchor n=5 c=2 k=2 gave {anchor}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("{cases} cases, anchor 0.7, {elapsed:.2?}"))
}

fn criterion_2() -> Check {
    let shown = format_percent(pass_rate(68, 121).map_err(|e| e.to_string())?);
    ensure!(shown == "56.2%", "rendered {shown}");
    Ok(shown)
}

fn criterion_3() -> Check {
    #[derive(serde::Deserialize)]
    struct Case {
        name: String,
        response: String,
        code: String,
        method: ExtractionMethod,
    }
    let text = fs::read_to_string(fixtures().join("extraction/cases.json")).map_err(|e| e.to_string())?;
    let cases: Vec<Case> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    ensure!(cases.len() >= 12, "only {} fixtures", cases.len());
    for required in [
        "single_block",
        "multiple_blocks_first_wins",
        "no_block",
        "language_tag_on_fence",
        "unterminated_fence",
        "crlf_block",
        "empty_block",
        "text_before_and_after",
    ] {
        ensure!(cases.iter().any(|c| c.name == required), "missing fixture {required}");
    }
    for case in &cases {
        let got = extract_code(&case.response);
        ensure!(
            got.code == case.code && got.method == case.method,
            "{}: got {:?}",
            case.name,
            got.code
        );
    }
    Ok(format!("{} fixtures byte-exact", cases.len()))
}

fn criterion_4() -> Check {
    let dir = fixtures().join("templates");
    let read = |f: &str| fs::read_to_string(dir.join(f)).map_err(|e| e.to_string());
    let messages: Vec<Message> = serde_json::from_str(&read("messages.json")?).map_err(|e| e.to_string())?;
    let registry = TemplateRegistry::with_builtins();
    for id in ["llama2", "deepseek"] {
        let rendered = registry
            .get(id)
            .map_err(|e| e.to_string())?
            .render(&messages)
            .map_err(|e| e.to_string())?;
        let expected = read(&format!("{id}.txt"))?;
        ensure!(rendered == expected, "{id} differs:\n{rendered}\n---\n{expected}");
    }
    Ok("llama2 and deepseek byte-exact".into())
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let tasks = humaneval_tasks();
    ensure!(tasks.len() == 10, "bundled suite has {} tasks", tasks.len());

    let oracle = tasks.iter().fold(ScriptedBehavior::new("no answer"), |b, t| {
        b.respond(&t.task_id, None, None, fenced(t.reference_solution.as_ref().unwrap()))
    });
    let tmp = tempfile::tempdir().unwrap();
    let cfg = run_config(
        tmp.path(),
        "oracle",
        &[HUMANEVAL],
        serde_json::json!({"answers_per_task": 1}),
    );
    let out = evaluator(cfg, "oracle", oracle).run().map_err(|e| e.to_string())?;
    let oracle_pass = out.records[0].summary.pass_at_k[&1];
    ensure!(oracle_pass == 1.0, "oracle pass@1 = {oracle_pass}");

    let two_of_five = tasks.iter().fold(ScriptedBehavior::new(fenced("def nope(:")), |b, t| {
        let good = fenced(t.reference_solution.as_ref().unwrap());
        b.respond(&t.task_id, Some(0), None, good.clone())
            .respond(&t.task_id, Some(1), None, good)
    });
    let tmp = tempfile::tempdir().unwrap();
    let cfg = run_config(
        tmp.path(),
        "cn",
        &[HUMANEVAL],
        serde_json::json!({"answers_per_task": 5}),
    );
    let out = evaluator(cfg, "cn", two_of_five).run().map_err(|e| e.to_string())?;
    let s = &out.records[0].summary;
    ensure!((s.pass_at_k[&1] - 0.4).abs() <= 1e-12, "pass@1 = {}", s.pass_at_k[&1]);
    ensure!((s.pass_at_k[&2] - 0.7).abs() <= 1e-12, "pass@2 = {}", s.pass_at_k[&2]);
    ensure!(!s.pass_at_k.contains_key(&10), "pass@10 present in summary");
    ensure!(
        matches!(
            pass_at_k(&TaskSample::new("t", 5, 2).unwrap(), 10),
            Err(MetricsError::KExceedsSamples { k: 10, n: 5 })
        ),
        "k>n not rejected by the estimator"
    );
    let request = ReportRequest {
        results_dir: tmp.path().to_path_buf(),
        metrics: parse_metrics("pass@10").unwrap(),
        group_by: GroupBy::Model,
        format: OutputFormat::Table,
    };
    ensure!(
        matches!(build_report(&request), Err(ReportError::Metric { .. })),
        "report accepted pass@10"
    );
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "oracle 100.0%, c-of-n pass@1 0.4 pass@2 0.7, pass@10 rejected, {elapsed:.2?}"
    ))
}

fn criterion_6() -> Check {
    let tasks = humaneval_tasks();
    let behavior = tasks.iter().fold(ScriptedBehavior::new("x"), |b, t| {
        b.respond(&t.task_id, None, Some(0), fenced("def broken(:\n    pass"))
            .respond(
                &t.task_id,
                None,
                Some(1),
                fenced(t.reference_solution.as_ref().unwrap()),
            )
    });
    for depth in [0u32, 1] {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = run_config(
            tmp.path(),
            "fix",
            &[HUMANEVAL],
            serde_json::json!({"max_chain_depth": depth}),
        );
        let out = evaluator(cfg, "fix", behavior.clone())
            .run()
            .map_err(|e| e.to_string())?;
        let rec = &out.records[0];
        for t in &tasks {
            let chain: Vec<_> = rec.answers_for(&t.task_id).collect();
            let passed = chain.iter().any(|a| a.passed());
            if depth == 0 {
                ensure!(!passed && chain.len() == 1, "{} passed without a chain", t.task_id);
                continue;
            }
            ensure!(
                chain.len() == 2 && chain[1].chain_depth == 1 && chain[1].passed(),
                "{} not fixed at depth 1",
                t.task_id
            );
            let first = chain[0];
            let error = &first.verdict.as_ref().unwrap().log;
            let key_line = error.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or_default();
            let all: String = chain[1]
                .messages
                .iter()
                .map(|m| m.content.as_str())
                .collect::<Vec<_>>()
                .join("\n");
            ensure!(all.contains(t.description.trim()), "{}: description missing", t.task_id);
            ensure!(
                all.contains(&first.raw_response),
                "{}: previous response missing",
                t.task_id
            );
            ensure!(
                !key_line.is_empty() && all.contains(key_line),
                "{}: error text missing",
                t.task_id
            );
        }
        let expected = if depth == 1 { 1.0 } else { 0.0 };
        ensure!(
            rec.summary.pass_at_k[&1] == expected,
            "depth {depth}: pass@1 {}",
            rec.summary.pass_at_k[&1]
        );
    }
    Ok("depth 0 all fail, depth 1 all pass; prompts carry description, response and errors".into())
}

fn normalized_digests(dir: &Path) -> BTreeMap<String, String> {
    let re = regex::Regex::new(r#""(started|finished|created)": "[^"]*""#).unwrap();
    load_manifest(dir)
        .unwrap()
        .files
        .iter()
        .map(|e| {
            let text = fs::read_to_string(dir.join(&e.file)).unwrap();
            (
                e.file.clone(),
                sha256_hex(re.replace_all(&text, "\"$1\": \"T\"").as_bytes()),
            )
        })
        .collect()
}

fn criterion_7() -> Check {
    let tasks = humaneval_tasks();
    let behavior = tasks
        .iter()
        .fold(ScriptedBehavior::new(fenced("import os\nos.system('ls')")), |b, t| {
            b.respond(&t.task_id, None, Some(0), fenced("def broken(:\n    pass"))
                .respond(
                    &t.task_id,
                    None,
                    Some(1),
                    fenced(t.reference_solution.as_ref().unwrap()),
                )
        });
    let tmp = tempfile::tempdir().unwrap();
    let cfg = run_config(
        tmp.path(),
        "det",
        &[HUMANEVAL, SECURITYEVAL],
        serde_json::json!({"max_chain_depth": 1}),
    );
    let ev = evaluator(cfg, "det", behavior);
    ev.run().map_err(|e| e.to_string())?;
    let first = normalized_digests(tmp.path());
    ev.run().map_err(|e| e.to_string())?;
    let second = normalized_digests(tmp.path());
    ensure!(first.len() == 4, "{} result files", first.len());
    ensure!(first == second, "digests differ: {first:?} vs {second:?}");
    Ok(format!("{} result files identical", first.len()))
}

fn criterion_8() -> Check {
    let limit = Duration::from_secs(2);
    let sandbox = SandboxHandle::new(
        None,
        SandboxLimits {
            output_cap: 64 * 1024,
            ..SandboxLimits::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let registry = DatasetRegistry::with_builtins();
    let adapter = registry.get(HUMANEVAL).map_err(|e| e.to_string())?;
    let env = DatasetEnv {
        paths: BTreeMap::new(),
        root: registry
            .resolve_root(HUMANEVAL, &BTreeMap::new())
            .map_err(|e| e.to_string())?,
    };
    let mut task = humaneval_tasks().remove(0);
    task.test_spec.timeout = limit;
    // a background child plus a busy loop; the child must die with the group
    let hostile = "import os, subprocess\nopen('pgid', 'w').write(str(os.getpgrp()))\nsubprocess.Popen(['sleep', '300'])\nwhile True:\n    pass\n";
    let ws = sandbox.workspace(&["acceptance", "loop"]).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let verdict = adapter
        .test_answer(&task, hostile, &sandbox, &ws, &env)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let pgid: i32 = fs::read_to_string(ws.join("pgid"))
        .map_err(|e| e.to_string())?
        .trim()
        .parse()
        .map_err(|e| format!("{e}"))?;
    sandbox.release(&ws);
    ensure!(
        verdict.detail == "timeout" && !verdict.is_pass(),
        "verdict {:?}",
        verdict.detail
    );
    ensure!(elapsed < limit + Duration::from_secs(5), "timeout took {elapsed:?}");
    ensure!(
        !process_group_alive(pgid),
        "process group {pgid} still has live members"
    );

    let ws = sandbox.workspace(&["acceptance", "flood"]).map_err(|e| e.to_string())?;
    let cmd = codeeval::sandbox::CommandSpec::new("python3", ["-c", "print('x' * 5_000_000)"]);
    let out = sandbox.run_command(&cmd, &ws).map_err(|e| e.to_string())?;
    sandbox.release(&ws);
    ensure!(
        out.stdout_truncated && out.stdout.len() <= 64 * 1024 + 64,
        "stdout {} bytes",
        out.stdout.len()
    );
    Ok(format!(
        "timeout after {elapsed:.2?} (limit {limit:?}), group reaped, stdout capped at {} bytes",
        out.stdout.len()
    ))
}

fn criterion_9() -> Check {
    let rules = RuleSet::builtin();
    let list = |kind: &str| -> Vec<PathBuf> {
        let mut v: Vec<_> = fs::read_dir(fixtures().join("analyzers").join(kind))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        v.sort();
        v
    };
    let (vulnerable, clean) = (list("vulnerable"), list("clean"));
    ensure!(
        vulnerable.len() == 5 && clean.len() == 5,
        "fixture counts {} / {}",
        vulnerable.len(),
        clean.len()
    );
    for f in &vulnerable {
        let findings = rules.scan(&fs::read_to_string(f).unwrap());
        ensure!(!findings.is_empty(), "{} not flagged", f.display());
    }
    for f in &clean {
        let findings = rules.scan(&fs::read_to_string(f).unwrap());
        ensure!(findings.is_empty(), "{} flagged: {findings:?}", f.display());
    }
    let mut sandbox = SandboxHandle::new(None, SandboxLimits::default()).map_err(|e| e.to_string())?;
    let crash = AnalyzerCommandSpec {
        command: vec!["sh".into(), "-c".into(), "exit 2".into()],
        format: ReportFormat::Lines,
        file_name: "scan_target.py".into(),
    };
    sandbox.register_analyzer(crash.into_entry("crashing").map_err(|e| e.to_string())?);
    let ws = sandbox.workspace(&["acceptance", "scan"]).map_err(|e| e.to_string())?;
    let source = fs::read_to_string(&clean[0]).unwrap();
    let ok = sandbox
        .run_analyzer(BUILTIN_ANALYZER_ID, &source, &ws)
        .map_err(|e| e.to_string())?;
    ensure!(ok.is_empty(), "clean source flagged in sandbox");
    let crashed = sandbox.run_analyzer("crashing", &source, &ws);
    ensure!(
        matches!(crashed, Err(SandboxError::AnalyzerCrashed { .. })),
        "crash reported as {crashed:?}"
    );
    Ok("5 flagged, 5 clean, crash reported as an error".into())
}

fn criterion_10() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = run_config(
        tmp.path(),
        "sweep",
        &[HUMANEVAL],
        serde_json::json!({
            "generation_config": {"do_sample": true},
            "sweep": {"temperature": [0.32, 0.56, 0.8], "top_p": [0.38, 0.665, 0.95]},
        }),
    );
    let runs = evaluator(cfg, "sweep", ScriptedBehavior::new("x"))
        .run_sweep()
        .map_err(|e| e.to_string())?;
    ensure!(runs.len() == 9, "{} sweep runs", runs.len());
    let index = load_sweep_index(tmp.path())
        .map_err(|e| e.to_string())?
        .ok_or("no sweep index")?;
    let mut grid = Vec::new();
    for entry in &index.runs {
        let summaries = load_summaries(&tmp.path().join(&entry.dir)).map_err(|e| e.to_string())?;
        ensure!(summaries.len() == 1, "{}: {} summaries", entry.dir, summaries.len());
        let s = &summaries[0];
        ensure!(
            s.metadata.get("sweep.temperature") == Some(&entry.point.temperature.to_string()),
            "{}: temperature not recorded",
            entry.dir
        );
        ensure!(
            s.metadata.get("sweep.top_p") == Some(&entry.point.top_p.to_string()),
            "{}: top_p not recorded",
            entry.dir
        );
        ensure!(
            s.params.temperature == entry.point.temperature && s.params.top_p == entry.point.top_p,
            "{}: params differ",
            entry.dir
        );
        grid.push((entry.point.temperature, entry.point.top_p));
    }
    let mut expected = Vec::new();
    for t in [0.32, 0.56, 0.8] {
        for p in [0.38, 0.665, 0.95] {
            expected.push((t, p));
        }
    }
    ensure!(grid == expected, "grid {grid:?}");
    let request = ReportRequest {
        results_dir: tmp.path().to_path_buf(),
        metrics: parse_metrics("pass@1,tokens/s").unwrap(),
        group_by: GroupBy::Model,
        format: OutputFormat::Table,
    };
    let table = build_report(&request).map_err(|e| e.to_string())?;
    ensure!(table.rows.len() == 9, "report has {} rows", table.rows.len());
    Ok("9 summaries with swept values in metadata".into())
}

fn write(path: &Path, text: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

fn synthetic_layouts(root: &Path) -> BTreeMap<String, PathBuf> {
    let he = root.join("human-eval");
    let lines: Vec<String> = (0..164)
        .map(|i| {
            serde_json::json!({
                "task_id": format!("HumanEval/{i}"),
                "prompt": format!("def f{i}(x):\n    \"\"\"Return x.\"\"\"\n"),
                "canonical_solution": "    return x\n",
                "test": format!("def check(candidate):\n    assert candidate({i}) == {i}\n"),
                "entry_point": format!("f{i}"),
            })
            .to_string()
        })
        .collect();
    write(&he.join("HumanEval.jsonl"), &lines.join("\n"));

    let qb = root.join("QuixBugs");
    write(&qb.join("python_programs/node.py"), "class Node:\n    pass\n");
    write(
        &qb.join("java_programs/Node.java"),
        "package java_programs;\npublic class Node {}\n",
    );
    write(
        &qb.join("java_programs/WeightedEdge.java"),
        "package java_programs;\npublic class WeightedEdge {}\n",
    );
    for i in 0..40 {
        let name = format!("prog_{i:02}");
        write(
            &qb.join(format!("python_programs/{name}.py")),
            &format!("def {name}(x):\n    return x\n"),
        );
        write(
            &qb.join(format!("correct_python_programs/{name}.py")),
            &format!("def {name}(x):\n    return x\n"),
        );
        write(&qb.join(format!("json_testcases/{name}.json")), "[[1], 1]\n");
        let class = format!("PROG_{i:02}");
        write(
            &qb.join(format!("java_programs/{class}.java")),
            &format!("package java_programs;\npublic class {class} {{}}\n"),
        );
        write(
            &qb.join(format!("java_testcases/{class}_TEST.java")),
            "package java_testcases;\n",
        );
    }

    let se = root.join("SecurityEval");
    let lines: Vec<String> = (0..121)
        .map(|i| {
            serde_json::json!({
                "ID": format!("CWE-{:03}_author_{i}.py", 20 + i % 7),
                "Prompt": format!("def task_{i}():\n    \"\"\"Do something safely.\"\"\"\n"),
                "Insecure_code": "pass\n",
            })
            .to_string()
        })
        .collect();
    write(&se.join("dataset.jsonl"), &lines.join("\n"));

    BTreeMap::from([
        ("HUMANEVAL_ROOT".to_string(), he),
        ("QUIXBUGS_ROOT".to_string(), qb),
        ("SECURITYEVAL_ROOT".to_string(), se),
    ])
}

fn criterion_11() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let paths = synthetic_layouts(tmp.path());
    let registry = DatasetRegistry::with_builtins();
    let env = DatasetEnv {
        paths,
        root: PathBuf::new(),
    };
    let mut report = Vec::new();
    for (id, expected) in [
        (HUMANEVAL, 164),
        (QUIXBUGS_PYTHON, 40),
        (QUIXBUGS_JAVA, 40),
        (SECURITYEVAL, 121),
    ] {
        let n = registry.load_prompts(id, &env).map_err(|e| format!("{id}: {e}"))?.len();
        ensure!(n == expected, "{id}: {n} tasks, expected {expected}");
        report.push(format!("{id} {n}"));
    }
    for id in registry.ids().collect::<Vec<_>>() {
        let root = registry.resolve_root(id, &BTreeMap::new()).map_err(|e| e.to_string())?;
        // QuixBugs keeps one manifest per language
        let per_language = match id {
            QUIXBUGS_PYTHON => root.join("python"),
            QUIXBUGS_JAVA => root.join("java"),
            _ => root,
        };
        let manifest: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(per_language.join("manifest.json")).map_err(|e| format!("{id}: {e}"))?,
        )
        .map_err(|e| e.to_string())?;
        let n = registry
            .load_prompts(id, &DatasetEnv::default())
            .map_err(|e| format!("{id}: {e}"))?
            .len();
        ensure!(
            manifest["count"] == n,
            "{id}: bundled {n} vs manifest {}",
            manifest["count"]
        );
    }
    Ok(format!("{}; bundled suites match their manifests", report.join(", ")))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("pass@k exactness", criterion_1),
        ("pass-rate rendering", criterion_2),
        ("extraction corpus", criterion_3),
        ("template fixtures", criterion_4),
        ("end-to-end oracle run", criterion_5),
        ("correction chain", criterion_6),
        ("determinism", criterion_7),
        ("sandbox safety", criterion_8),
        ("security suite oracle", criterion_9),
        ("parameter sweep", criterion_10),
        ("dataset counts", criterion_11),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {reason}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
