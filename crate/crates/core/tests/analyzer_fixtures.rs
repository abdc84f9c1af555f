use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use codeeval::analyzers::{ReportFormat, RuleSet, BUILTIN_ANALYZER_ID};
use codeeval::sandbox::{AnalyzerCommandSpec, SandboxError, SandboxHandle, SandboxLimits};

fn fixtures(kind: &str) -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/analyzers")
        .join(kind);
    let mut files: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
}

/// `cwe78_ping.py` -> `CWE-78`
fn expected_cwe(path: &Path) -> String {
    let stem = path.file_stem().unwrap().to_str().unwrap();
    let digits = stem.trim_start_matches("cwe").split('_').next().unwrap();
    format!("CWE-{digits}")
}

#[test]
fn vulnerable_fixtures_are_flagged_with_their_cwe() {
    let rules = RuleSet::builtin();
    let files = fixtures("vulnerable");
    assert_eq!(files.len(), 5);
    for f in files {
        let findings = rules.scan(&fs::read_to_string(&f).unwrap());
        let cwe = expected_cwe(&f);
        assert!(
            findings.iter().any(|x| x.cwe() == Some(cwe.as_str())),
            "{}: {findings:?}",
            f.display()
        );
    }
}

#[test]
fn clean_fixtures_have_no_findings() {
    let rules = RuleSet::builtin();
    let files = fixtures("clean");
    assert_eq!(files.len(), 5);
    for f in files {
        let findings = rules.scan(&fs::read_to_string(&f).unwrap());
        assert!(findings.is_empty(), "{}: {findings:?}", f.display());
    }
}

#[test]
fn sandboxed_scan_distinguishes_findings_clean_and_crash() {
    let limits = SandboxLimits {
        wall_time: Duration::from_secs(10),
        ..SandboxLimits::default()
    };
    let mut sandbox = SandboxHandle::new(None, limits).unwrap();
    let crash = AnalyzerCommandSpec {
        command: vec!["sh".into(), "-c".into(), "echo boom >&2; exit 3".into()],
        format: ReportFormat::Lines,
        file_name: "scan_target.py".into(),
    };
    sandbox.register_analyzer(crash.into_entry("crashing").unwrap());
    let ws = sandbox.workspace(&["scan"]).unwrap();

    let vulnerable = fs::read_to_string(&fixtures("vulnerable")[0]).unwrap();
    let clean = fs::read_to_string(&fixtures("clean")[0]).unwrap();
    assert!(!sandbox
        .run_analyzer(BUILTIN_ANALYZER_ID, &vulnerable, &ws)
        .unwrap()
        .is_empty());
    assert!(sandbox
        .run_analyzer(BUILTIN_ANALYZER_ID, &clean, &ws)
        .unwrap()
        .is_empty());
    match sandbox.run_analyzer("crashing", &clean, &ws) {
        Err(SandboxError::AnalyzerCrashed {
            exit_status, stderr, ..
        }) => {
            assert_eq!(exit_status, 3);
            assert!(stderr.contains("boom"));
        }
        other => panic!("expected a crash, got {other:?}"),
    }
}
