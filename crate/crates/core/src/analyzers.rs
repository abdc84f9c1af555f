//! Security findings, the built-in pattern analyzer, and report parsers for
//! external analyzers.
//!
//! The built-in analyzer is a line-oriented rule engine: each rule is a
//! literal or a size-bounded regex matched against every non-comment source
//! line. It approximates Bandit-class checks at much lower fidelity and is
//! flagged as such in result metadata.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BUILTIN_ANALYZER_ID: &str = "builtin-patterns";

pub const BUILTIN_FIDELITY_NOTE: &str = "verdicts produced by the built-in pattern analyzer; \
     it matches a small set of line patterns and will miss weaknesses that Bandit- or \
     CodeQL-class analyzers detect";

const BUILTIN_RULES: &str = include_str!("../data/rules/python_builtin.json");

/// Upper bound on compiled regex size for rule patterns.
const PATTERN_SIZE_LIMIT: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("invalid rule `{id}`: {reason}")]
    InvalidRule { id: String, reason: String },
    #[error("duplicate rule id `{0}`")]
    DuplicateRule(String),
    #[error("malformed rule file: {0}")]
    Malformed(String),
    #[error("unparseable analyzer report: {0}")]
    UnparseableReport(String),
    #[error("failed to read rule file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: String,
    pub location: Location,
    pub severity: String,
    pub message: String,
}

impl Finding {
    /// The `CWE-<n>` prefix of the rule id, when present.
    pub fn cwe(&self) -> Option<&str> {
        let id = self.rule_id.as_str();
        if !id.starts_with("CWE-") {
            return None;
        }
        let end = id[4..].find(|c: char| !c.is_ascii_digit()).map_or(id.len(), |i| i + 4);
        (end > 4).then(|| &id[..end])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternSpec {
    Literal(String),
    Regex(String),
}

/// One rule record as stored in a rule file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub id: String,
    pub pattern: PatternSpec,
    pub message: String,
    pub severity: String,
}

#[derive(Debug, Clone)]
enum Matcher {
    Literal(String),
    Regex(Regex),
}

/// A validated rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub spec: RuleSpec,
    matcher: Matcher,
}

impl Rule {
    pub fn compile(spec: RuleSpec) -> Result<Self, AnalyzerError> {
        let invalid = |reason: String| AnalyzerError::InvalidRule {
            id: spec.id.clone(),
            reason,
        };
        if spec.id.trim().is_empty() {
            return Err(invalid("empty rule id".into()));
        }
        let matcher = match &spec.pattern {
            PatternSpec::Literal(text) if text.is_empty() => return Err(invalid("empty literal".into())),
            PatternSpec::Literal(text) => Matcher::Literal(text.clone()),
            PatternSpec::Regex(src) => {
                let re = RegexBuilder::new(src)
                    .size_limit(PATTERN_SIZE_LIMIT)
                    .build()
                    .map_err(|e| invalid(e.to_string()))?;
                if re.is_match("") {
                    return Err(invalid("pattern matches the empty line".into()));
                }
                Matcher::Regex(re)
            }
        };
        Ok(Self { spec, matcher })
    }

    fn matches(&self, line: &str) -> bool {
        match &self.matcher {
            Matcher::Literal(text) => line.contains(text.as_str()),
            Matcher::Regex(re) => re.is_match(line),
        }
    }
}

/// A validated, id-unique rule list.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn new(specs: Vec<RuleSpec>) -> Result<Self, AnalyzerError> {
        let mut seen = HashSet::new();
        let mut rules = Vec::with_capacity(specs.len());
        for spec in specs {
            if !seen.insert(spec.id.clone()) {
                return Err(AnalyzerError::DuplicateRule(spec.id));
            }
            rules.push(Rule::compile(spec)?);
        }
        Ok(Self { rules })
    }

    pub fn from_json(text: &str) -> Result<Self, AnalyzerError> {
        let specs: Vec<RuleSpec> = serde_json::from_str(text).map_err(|e| AnalyzerError::Malformed(e.to_string()))?;
        Self::new(specs)
    }

    pub fn from_file(path: &Path) -> Result<Self, AnalyzerError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Rules shipped with the crate (`data/rules/python_builtin.json`).
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_RULES).expect("bundled rule file is valid")
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn scan(&self, source: &str) -> Vec<Finding> {
        scan(&self.rules, source, "source")
    }
}

fn is_comment(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with('#') || t.starts_with("//")
}

/// One finding per (rule, matching line), ordered by (line, rule id).
pub fn scan(rules: &[Rule], source: &str, file: &str) -> Vec<Finding> {
    let mut findings = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        if is_comment(line) {
            continue;
        }
        for rule in rules.iter().filter(|r| r.matches(line)) {
            findings.push(Finding {
                rule_id: rule.spec.id.clone(),
                location: Location {
                    file: file.to_string(),
                    line: idx as u32 + 1,
                },
                severity: rule.spec.severity.clone(),
                message: rule.spec.message.clone(),
            });
        }
    }
    findings.sort_by(|a, b| (a.location.line, &a.rule_id).cmp(&(b.location.line, &b.rule_id)));
    findings
}

/// Line-oriented report: `file:line:rule:message`, one finding per line.
pub fn format_line_report(findings: &[Finding]) -> String {
    let mut out = String::new();
    for f in findings {
        let _ = writeln!(
            out,
            "{}:{}:{}:{}",
            f.location.file, f.location.line, f.rule_id, f.message
        );
    }
    out
}

/// Parses the line-oriented report. Blank lines are ignored; severity is not
/// carried by the format and defaults to `unknown`.
pub fn parse_line_report(text: &str) -> Result<Vec<Finding>, AnalyzerError> {
    let mut out = Vec::new();
    for raw in text.lines() {
        let line = raw.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(4, ':');
        let (Some(file), Some(lineno), Some(rule), Some(message)) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(AnalyzerError::UnparseableReport(format!(
                "expected file:line:rule:message, got `{line}`"
            )));
        };
        let lineno: u32 = lineno
            .trim()
            .parse()
            .map_err(|_| AnalyzerError::UnparseableReport(format!("bad line number in `{line}`")))?;
        if rule.trim().is_empty() {
            return Err(AnalyzerError::UnparseableReport(format!("empty rule id in `{line}`")));
        }
        out.push(Finding {
            rule_id: rule.trim().to_string(),
            location: Location {
                file: file.to_string(),
                line: lineno,
            },
            severity: "unknown".into(),
            message: message.trim().to_string(),
        });
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FindingsDocument {
    findings: Vec<Finding>,
}

/// Structured findings document: `{"findings": [Finding, ...]}`.
pub fn parse_findings_document(text: &str) -> Result<Vec<Finding>, AnalyzerError> {
    let doc: FindingsDocument =
        serde_json::from_str(text).map_err(|e| AnalyzerError::UnparseableReport(e.to_string()))?;
    if let Some(bad) = doc.findings.iter().find(|f| f.rule_id.is_empty()) {
        return Err(AnalyzerError::UnparseableReport(format!(
            "finding at {}:{} has an empty rule id",
            bad.location.file, bad.location.line
        )));
    }
    Ok(doc.findings)
}

#[derive(Debug, Deserialize)]
struct BanditReport {
    results: Vec<BanditResult>,
}

#[derive(Debug, Deserialize)]
struct BanditResult {
    filename: String,
    line_number: u32,
    test_id: String,
    issue_severity: String,
    issue_text: String,
    #[serde(default)]
    issue_cwe: Option<BanditCwe>,
}

#[derive(Debug, Deserialize)]
struct BanditCwe {
    id: u32,
}

/// Bandit's `-f json` output, mapped to `CWE-<id>/<test_id>` rule ids.
pub fn parse_bandit_json(text: &str) -> Result<Vec<Finding>, AnalyzerError> {
    let report: BanditReport =
        serde_json::from_str(text).map_err(|e| AnalyzerError::UnparseableReport(e.to_string()))?;
    Ok(report
        .results
        .into_iter()
        .map(|r| Finding {
            rule_id: match r.issue_cwe {
                Some(cwe) => format!("CWE-{}/{}", cwe.id, r.test_id),
                None => r.test_id,
            },
            location: Location {
                file: r.filename,
                line: r.line_number,
            },
            severity: r.issue_severity.to_lowercase(),
            message: r.issue_text,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    /// `file:line:rule:message`
    Lines,
    /// `{"findings": [...]}`
    FindingsJson,
    BanditJson,
}

impl ReportFormat {
    pub fn parse(self, text: &str) -> Result<Vec<Finding>, AnalyzerError> {
        match self {
            ReportFormat::Lines => parse_line_report(text),
            ReportFormat::FindingsJson => parse_findings_document(text),
            ReportFormat::BanditJson => parse_bandit_json(text),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(id: &str, pattern: PatternSpec) -> RuleSpec {
        RuleSpec {
            id: id.into(),
            pattern,
            message: format!("{id} hit"),
            severity: "high".into(),
        }
    }

    #[test]
    fn builtin_rules_load() {
        let rules = RuleSet::builtin();
        assert!(rules.len() >= 8);
        for r in rules.rules() {
            assert!(r.spec.id.starts_with("CWE-"), "{}", r.spec.id);
        }
    }

    #[test]
    fn shell_concatenation_flagged() {
        let src = "import os\n\ndef run(name):\n    os.system(\"ls \" + name)\n";
        let findings = RuleSet::builtin().scan(src);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].cwe(), Some("CWE-78"));
        assert_eq!(findings[0].location.line, 4);
    }

    #[test]
    fn empty_source_has_no_findings() {
        assert!(RuleSet::builtin().scan("").is_empty());
        assert!(RuleSet::builtin().scan("def f(s):\n    return len(s)\n").is_empty());
    }

    #[test]
    fn comments_are_ignored() {
        assert!(RuleSet::builtin().scan("# eval(input())\n").is_empty());
    }

    #[test]
    fn two_rules_same_line_ordered() {
        let set = RuleSet::new(vec![
            rule("CWE-2/b", PatternSpec::Literal("x".into())),
            rule("CWE-1/a", PatternSpec::Regex("x+".into())),
        ])
        .unwrap();
        let f = set.scan("ok\nxx\n");
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].rule_id, "CWE-1/a");
        assert_eq!(f[1].rule_id, "CWE-2/b");
        assert!(f.iter().all(|x| x.location.line == 2));
    }

    #[test]
    fn invalid_rules_rejected() {
        assert!(matches!(
            RuleSet::new(vec![
                rule("a", PatternSpec::Literal("x".into())),
                rule("a", PatternSpec::Literal("y".into())),
            ]),
            Err(AnalyzerError::DuplicateRule(_))
        ));
        assert!(RuleSet::new(vec![rule("a", PatternSpec::Regex("(".into()))]).is_err());
        assert!(RuleSet::new(vec![rule("a", PatternSpec::Regex(".*".into()))]).is_err());
        assert!(RuleSet::new(vec![rule("", PatternSpec::Literal("x".into()))]).is_err());
    }

    #[test]
    fn line_report_round_trip() {
        let findings = vec![Finding {
            rule_id: "CWE-95/eval".into(),
            location: Location {
                file: "a.py".into(),
                line: 3,
            },
            severity: "unknown".into(),
            message: "use of eval: consider ast.literal_eval".into(),
        }];
        let text = format_line_report(&findings);
        assert_eq!(parse_line_report(&text).unwrap(), findings);
        assert!(parse_line_report("garbage").is_err());
        assert!(parse_line_report("a.py:x:r:m").is_err());
        assert!(parse_line_report("\n\n").unwrap().is_empty());
    }

    #[test]
    fn findings_document() {
        let doc = r#"{"findings":[{"rule_id":"CWE-89","location":{"file":"f.py","line":2},"severity":"high","message":"sql"}]}"#;
        assert_eq!(parse_findings_document(doc).unwrap().len(), 1);
        assert!(parse_findings_document("{}").is_err());
    }

    #[test]
    fn bandit_report() {
        let doc = r#"{"errors":[],"results":[{"filename":"s.py","line_number":4,"test_id":"B602",
            "issue_severity":"HIGH","issue_text":"shell=True","issue_cwe":{"id":78,"link":""}}]}"#;
        let f = parse_bandit_json(doc).unwrap();
        assert_eq!(f[0].rule_id, "CWE-78/B602");
        assert_eq!(f[0].cwe(), Some("CWE-78"));
        assert_eq!(f[0].severity, "high");
    }
}
