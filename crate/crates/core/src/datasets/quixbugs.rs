//! QuixBugs-shaped repair suites, one adapter per language.
//!
//! Python layout: `python_programs/<name>.py` (buggy), optional
//! `correct_python_programs/<name>.py`, tests in `json_testcases/<name>.json`
//! or `python_testcases/test_<name>.py`.
//!
//! Java layout: `java_programs/<NAME>.java`, tests in
//! `java_testcases/<NAME>_TEST.java` (self-checking `main`) or
//! `java_testcases/junit/<NAME>_TEST.java` (needs `paths.JUNIT_CLASSPATH`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{
    finalize_tasks, read_file, Area, DatasetAdapter, DatasetEnv, DatasetError, PromptStyle, TaskRecord, TestKind,
    TestSpec, Verdict, DEFAULT_TEST_TIMEOUT,
};
use crate::sandbox::{CommandSpec, SandboxHandle};

const JSON_DRIVER: &str = include_str!("../../data/drivers/quixbugs_json.py");
const PY_HELPERS: [&str; 1] = ["node.py"];
const JAVA_HELPERS: [&str; 2] = ["Node.java", "WeightedEdge.java"];
const JAVA_HOME_KEYS: [&str; 3] = ["JAVA_HOME", "JAVA8_PATH", "JAVA7_PATH"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuixLanguage {
    Python,
    Java,
}

#[derive(Debug, Clone)]
pub struct QuixBugsAdapter {
    language: QuixLanguage,
    bundled: Option<PathBuf>,
}

impl QuixBugsAdapter {
    pub fn new(language: QuixLanguage, bundled: Option<PathBuf>) -> Self {
        Self { language, bundled }
    }
}

/// Moves a module-level docstring found at the end of the file to directly
/// after the first function declaration, indented as a function docstring.
/// Sources without a trailing docstring are returned unchanged.
pub fn relocate_trailing_docstring(source: &str) -> String {
    let trimmed = source.trim_end();
    let closing = ["\"\"\"", "'''"].into_iter().find(|q| trimmed.ends_with(q));
    let Some(quote) = closing else {
        return source.to_string();
    };
    let body = &trimmed[..trimmed.len() - 3];
    // the opening quote must start a line
    let Some(open) = body
        .match_indices(quote)
        .map(|(i, _)| i)
        .filter(|&i| i == 0 || body.as_bytes()[i - 1] == b'\n')
        .last()
    else {
        return source.to_string();
    };
    let docstring = &trimmed[open..];
    let code = trimmed[..open].trim_end();

    let mut out = String::new();
    let mut inserted = false;
    for line in code.split_inclusive('\n') {
        out.push_str(line);
        if !inserted && line.starts_with("def ") && line.trim_end().ends_with(':') {
            if !out.ends_with('\n') {
                out.push('\n');
            }
            for doc_line in docstring.lines() {
                if doc_line.trim().is_empty() {
                    out.push('\n');
                } else {
                    out.push_str("    ");
                    out.push_str(doc_line);
                    out.push('\n');
                }
            }
            inserted = true;
        }
    }
    if !inserted {
        return source.to_string();
    }
    if !out.ends_with('\n') {
        out.push('\n');
    }
    out
}

fn list_programs(dir: &Path, ext: &str, exclude: &[&str]) -> Result<Vec<String>, DatasetError> {
    if !dir.is_dir() {
        return Err(DatasetError::Missing(dir.to_path_buf()));
    }
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(file) = path.file_name().and_then(|f| f.to_str()) else {
            continue;
        };
        let Some(stem) = file.strip_suffix(ext) else {
            continue;
        };
        if exclude.contains(&file) || stem.ends_with("_test") || stem.starts_with('_') {
            continue;
        }
        names.push(stem.to_string());
    }
    names.sort();
    Ok(names)
}

impl QuixBugsAdapter {
    fn load_python(&self, dataset_id: &str, root: &Path) -> Result<Vec<TaskRecord>, DatasetError> {
        let mut tasks = Vec::new();
        for name in list_programs(&root.join("python_programs"), ".py", &PY_HELPERS)? {
            let buggy = read_file(&root.join("python_programs").join(format!("{name}.py")))?;
            let source = relocate_trailing_docstring(&buggy);
            let correct = root.join("correct_python_programs").join(format!("{name}.py"));
            let reference = if correct.is_file() {
                Some(relocate_trailing_docstring(&std::fs::read_to_string(&correct)?))
            } else {
                None
            };
            let mut extra = BTreeMap::new();
            let json = root.join("json_testcases").join(format!("{name}.json"));
            let pytest = root.join("python_testcases").join(format!("test_{name}.py"));
            let mut skip = None;
            if json.is_file() {
                extra.insert("json_testcases".into(), json.display().to_string());
            } else if pytest.is_file() {
                extra.insert("pytest".into(), pytest.display().to_string());
            } else {
                skip = Some("no test cases".to_string());
            }
            tasks.push(TaskRecord {
                task_id: name.clone(),
                dataset_id: dataset_id.to_string(),
                area: Area::Apr,
                language: "python".into(),
                description: source.clone(),
                source_code: Some(source),
                test_spec: TestSpec {
                    kind: TestKind::UnitSuite,
                    entry: format!("python3 quixbugs_json.py {name}"),
                    timeout: DEFAULT_TEST_TIMEOUT,
                },
                reference_solution: reference,
                extra,
                skip,
            });
        }
        finalize_tasks(dataset_id, root, tasks)
    }

    fn load_java(&self, dataset_id: &str, root: &Path, env: &DatasetEnv) -> Result<Vec<TaskRecord>, DatasetError> {
        let toolchain_missing =
            env.find_program("javac", &JAVA_HOME_KEYS).is_none() || env.find_program("java", &JAVA_HOME_KEYS).is_none();
        let mut tasks = Vec::new();
        for name in list_programs(&root.join("java_programs"), ".java", &JAVA_HELPERS)? {
            let source = read_file(&root.join("java_programs").join(format!("{name}.java")))?;
            let correct = root.join("correct_java_programs").join(format!("{name}.java"));
            let reference = correct
                .is_file()
                .then(|| std::fs::read_to_string(&correct))
                .transpose()?
                .map(|r| r.replacen("package correct_java_programs;", "package java_programs;", 1));
            let mut extra = BTreeMap::new();
            let main_test = root.join("java_testcases").join(format!("{name}_TEST.java"));
            let junit_test = root
                .join("java_testcases")
                .join("junit")
                .join(format!("{name}_TEST.java"));
            let mut skip = None;
            if main_test.is_file() {
                extra.insert("main_test".into(), main_test.display().to_string());
            } else if junit_test.is_file() {
                extra.insert("junit_test".into(), junit_test.display().to_string());
                if !env.paths.contains_key("JUNIT_CLASSPATH") {
                    skip = Some("JUnit test requires paths.JUNIT_CLASSPATH".to_string());
                }
            } else {
                skip = Some("no test cases".to_string());
            }
            if toolchain_missing {
                skip = Some("java toolchain (javac/java) not found".to_string());
            }
            tasks.push(TaskRecord {
                task_id: name.clone(),
                dataset_id: dataset_id.to_string(),
                area: Area::Apr,
                language: "java".into(),
                description: source.clone(),
                source_code: Some(source),
                test_spec: TestSpec {
                    kind: TestKind::UnitSuite,
                    entry: format!("javac + java java_testcases.{name}_TEST"),
                    timeout: DEFAULT_TEST_TIMEOUT,
                },
                reference_solution: reference,
                extra,
                skip,
            });
        }
        finalize_tasks(dataset_id, root, tasks)
    }

    fn test_python(
        &self,
        task: &TaskRecord,
        code: &str,
        sandbox: &SandboxHandle,
        ws: &Path,
        env: &DatasetEnv,
    ) -> Result<Verdict, DatasetError> {
        let name = &task.task_id;
        if let Some(json) = task.extra.get("json_testcases") {
            std::fs::write(ws.join(format!("{name}.py")), code)?;
            std::fs::copy(json, ws.join("testcases.json"))?;
            for helper in PY_HELPERS {
                let src = env.root.join("python_programs").join(helper);
                if src.is_file() {
                    std::fs::copy(src, ws.join(helper))?;
                }
            }
            std::fs::write(ws.join("quixbugs_json.py"), JSON_DRIVER)?;
            let cmd =
                CommandSpec::new("python3", ["quixbugs_json.py", name.as_str()]).with_wall_time(task.test_spec.timeout);
            let outcome = sandbox.run_command(&cmd, ws)?;
            return Ok(Verdict::from_outcome(&outcome));
        }
        let Some(test) = task.extra.get("pytest") else {
            return Err(DatasetError::InvalidTask {
                task: name.clone(),
                reason: "no test cases".into(),
            });
        };
        // pytest layout: tests import `python_programs.<name>`
        let pkg = ws.join("python_programs");
        std::fs::create_dir_all(&pkg)?;
        std::fs::write(pkg.join("__init__.py"), "")?;
        std::fs::write(pkg.join(format!("{name}.py")), code)?;
        for helper in PY_HELPERS {
            let src = env.root.join("python_programs").join(helper);
            if src.is_file() {
                std::fs::copy(src, pkg.join(helper))?;
            }
        }
        let tests = ws.join("python_testcases");
        std::fs::create_dir_all(&tests)?;
        std::fs::write(tests.join("__init__.py"), "")?;
        let file = format!("test_{name}.py");
        std::fs::copy(test, tests.join(&file))?;
        let test_path = format!("python_testcases/{file}");
        let cmd = CommandSpec::new(
            "python3",
            ["-m", "pytest", "-q", "-p", "no:cacheprovider", test_path.as_str()],
        )
        .with_wall_time(task.test_spec.timeout);
        let outcome = sandbox.run_command(&cmd, ws)?;
        if outcome.timed_out {
            return Ok(Verdict::timeout());
        }
        let mut verdict = Verdict::from_outcome(&outcome);
        if let Some((passed, failed)) = parse_pytest_summary(&outcome.stdout) {
            verdict.passed = passed;
            verdict.failed = if outcome.exit_status != 0 {
                failed.max(1)
            } else {
                failed
            };
        }
        Ok(verdict)
    }

    fn test_java(
        &self,
        task: &TaskRecord,
        code: &str,
        sandbox: &SandboxHandle,
        ws: &Path,
        env: &DatasetEnv,
    ) -> Result<Verdict, DatasetError> {
        let name = &task.task_id;
        let (javac, java) = match (
            env.find_program("javac", &JAVA_HOME_KEYS),
            env.find_program("java", &JAVA_HOME_KEYS),
        ) {
            (Some(c), Some(r)) => (c, r),
            _ => {
                return Err(DatasetError::InvalidTask {
                    task: name.clone(),
                    reason: "java toolchain not found".into(),
                })
            }
        };
        let programs = ws.join("java_programs");
        std::fs::create_dir_all(&programs)?;
        std::fs::write(programs.join(format!("{name}.java")), code)?;
        for helper in JAVA_HELPERS {
            let src = env.root.join("java_programs").join(helper);
            if src.is_file() {
                std::fs::copy(src, programs.join(helper))?;
            }
        }
        let mut sources = vec![format!("java_programs/{name}.java")];
        for helper in JAVA_HELPERS {
            if programs.join(helper).is_file() {
                sources.push(format!("java_programs/{helper}"));
            }
        }
        let (test_rel, main_class, classpath) = if let Some(t) = task.extra.get("main_test") {
            std::fs::create_dir_all(ws.join("java_testcases"))?;
            std::fs::copy(t, ws.join("java_testcases").join(format!("{name}_TEST.java")))?;
            (
                format!("java_testcases/{name}_TEST.java"),
                format!("java_testcases.{name}_TEST"),
                "classes".to_string(),
            )
        } else if let Some(t) = task.extra.get("junit_test") {
            std::fs::create_dir_all(ws.join("java_testcases").join("junit"))?;
            std::fs::copy(
                t,
                ws.join("java_testcases")
                    .join("junit")
                    .join(format!("{name}_TEST.java")),
            )?;
            let junit = env
                .paths
                .get("JUNIT_CLASSPATH")
                .map(|p| p.display().to_string())
                .unwrap_or_default();
            (
                format!("java_testcases/junit/{name}_TEST.java"),
                format!("org.junit.runner.JUnitCore java_testcases.junit.{name}_TEST"),
                format!("classes:{junit}"),
            )
        } else {
            return Err(DatasetError::InvalidTask {
                task: name.clone(),
                reason: "no test cases".into(),
            });
        };
        sources.push(test_rel);

        let mut compile_args = vec![
            "-d".to_string(),
            "classes".to_string(),
            "-cp".to_string(),
            classpath.clone(),
        ];
        compile_args.extend(sources);
        let compile =
            CommandSpec::new(javac.display().to_string(), compile_args).with_wall_time(task.test_spec.timeout);
        let outcome = sandbox.run_command(&compile, ws)?;
        if !outcome.success() {
            return Ok(Verdict::compile_failure(&outcome));
        }
        let mut run_args = vec!["-cp".to_string(), classpath];
        run_args.extend(main_class.split(' ').map(str::to_string));
        let run = CommandSpec::new(java.display().to_string(), run_args).with_wall_time(task.test_spec.timeout);
        let outcome = sandbox.run_command(&run, ws)?;
        let mut verdict = Verdict::from_outcome(&outcome);
        if let Some((passed, failed)) = parse_junit_summary(&outcome.stdout) {
            verdict.passed = passed;
            verdict.failed = failed;
            if failed == 0 && outcome.exit_status == 0 {
                verdict.detail = "ok".into();
            }
        }
        Ok(verdict)
    }
}

/// `N passed, M failed` from pytest's summary line.
fn parse_pytest_summary(stdout: &str) -> Option<(u32, u32)> {
    let line = stdout
        .lines()
        .rev()
        .find(|l| l.contains(" passed") || l.contains(" failed") || l.contains(" error"))?;
    let mut passed = 0;
    let mut failed = 0;
    let words: Vec<&str> = line
        .split(|c: char| c == ',' || c == '=' || c.is_whitespace())
        .filter(|w| !w.is_empty())
        .collect();
    for pair in words.windows(2) {
        if let Ok(n) = pair[0].parse::<u32>() {
            match pair[1] {
                "passed" => passed += n,
                "failed" | "error" | "errors" => failed += n,
                _ => {}
            }
        }
    }
    Some((passed, failed))
}

/// JUnit 4 text runner summary: `OK (N tests)` or `Tests run: N,  Failures: M`.
fn parse_junit_summary(stdout: &str) -> Option<(u32, u32)> {
    for line in stdout.lines().rev() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("OK (") {
            let n: u32 = rest.split_whitespace().next()?.parse().ok()?;
            return Some((n, 0));
        }
        if let Some(rest) = line.strip_prefix("Tests run:") {
            let mut parts = rest.split(',');
            let run: u32 = parts.next()?.trim().parse().ok()?;
            let failures: u32 = parts
                .find_map(|p| p.trim().strip_prefix("Failures:"))?
                .trim()
                .parse()
                .ok()?;
            return Some((run.saturating_sub(failures), failures));
        }
    }
    None
}

impl DatasetAdapter for QuixBugsAdapter {
    fn area(&self) -> Area {
        Area::Apr
    }

    fn prompt_style(&self) -> PromptStyle {
        PromptStyle::Repair
    }

    fn default_max_new_tokens(&self) -> u32 {
        1000
    }

    fn root_key(&self) -> Option<&str> {
        Some("QUIXBUGS_ROOT")
    }

    fn bundled_root(&self) -> Option<PathBuf> {
        self.bundled.clone()
    }

    fn load_prompts(&self, dataset_id: &str, root: &Path, env: &DatasetEnv) -> Result<Vec<TaskRecord>, DatasetError> {
        let lang_root = match self.language {
            QuixLanguage::Python => root.join("python"),
            QuixLanguage::Java => root.join("java"),
        };
        // bundled suite keeps one manifest per language; full checkouts are flat
        let base = if lang_root.is_dir() {
            lang_root
        } else {
            root.to_path_buf()
        };
        match self.language {
            QuixLanguage::Python => self.load_python(dataset_id, &base),
            QuixLanguage::Java => self.load_java(dataset_id, &base, env),
        }
    }

    fn test_answer(
        &self,
        task: &TaskRecord,
        code: &str,
        sandbox: &SandboxHandle,
        workspace: &Path,
        env: &DatasetEnv,
    ) -> Result<Verdict, DatasetError> {
        let lang_root = match self.language {
            QuixLanguage::Python => env.root.join("python"),
            QuixLanguage::Java => env.root.join("java"),
        };
        let env = if lang_root.is_dir() {
            DatasetEnv {
                paths: env.paths.clone(),
                root: lang_root,
            }
        } else {
            env.clone()
        };
        match self.language {
            QuixLanguage::Python => self.test_python(task, code, sandbox, workspace, &env),
            QuixLanguage::Java => self.test_java(task, code, sandbox, workspace, &env),
        }
    }
}
