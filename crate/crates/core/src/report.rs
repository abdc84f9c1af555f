//! Tables and CSV from persisted results. Reading only; digests are
//! verified before any number is shown.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::metrics::{format_percent, MetricsError};
use crate::orchestrator::{load_summaries, load_sweep_index, OrchestratorError, RunSummary};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Results(#[from] OrchestratorError),
    #[error("unknown metric `{0}` (expected pass@K, pass_rate, tokens/s, total_tokens, tasks or skipped)")]
    UnknownMetric(String),
    #[error("{metric} for {model} / {dataset}: {source}")]
    Metric {
        metric: Metric,
        model: String,
        dataset: String,
        #[source]
        source: MetricsError,
    },
    #[error("no metrics requested")]
    NoMetrics,
    #[error("no results in {0}")]
    Empty(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    PassAt(u32),
    PassRate,
    TokensPerSecond,
    TotalTokens,
    Tasks,
    Skipped,
}

impl FromStr for Metric {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        if let Some(k) = lower.strip_prefix("pass@") {
            return match k.parse::<u32>() {
                Ok(k) if k > 0 => Ok(Metric::PassAt(k)),
                _ => Err(ReportError::UnknownMetric(s.to_string())),
            };
        }
        Ok(match lower.as_str() {
            "pass_rate" | "pass-rate" | "passrate" => Metric::PassRate,
            "tokens/s" | "tokens_per_second" | "throughput" => Metric::TokensPerSecond,
            "total_tokens" | "tokens" => Metric::TotalTokens,
            "tasks" => Metric::Tasks,
            "skipped" => Metric::Skipped,
            _ => return Err(ReportError::UnknownMetric(s.to_string())),
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::PassAt(k) => write!(f, "Pass@{k}"),
            Metric::PassRate => f.write_str("Pass rate"),
            Metric::TokensPerSecond => f.write_str("Tokens/s"),
            Metric::TotalTokens => f.write_str("Tokens"),
            Metric::Tasks => f.write_str("Tasks"),
            Metric::Skipped => f.write_str("Skipped"),
        }
    }
}

/// Parses a comma-separated list such as `pass@1,pass@10,tokens/s`.
pub fn parse_metrics(list: &str) -> Result<Vec<Metric>, ReportError> {
    let metrics = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>, _>>()?;
    if metrics.is_empty() {
        return Err(ReportError::NoMetrics);
    }
    Ok(metrics)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupBy {
    #[default]
    Model,
    Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Table,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRequest {
    pub results_dir: PathBuf,
    pub metrics: Vec<Metric>,
    pub group_by: GroupBy,
    pub format: OutputFormat,
}

/// Formatted cells; table and CSV output share them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn metric_cell(metric: Metric, s: &RunSummary) -> Result<String, ReportError> {
    let m = &s.summary;
    Ok(match metric {
        Metric::PassAt(k) => {
            if k > s.answers_per_task {
                return Err(ReportError::Metric {
                    metric,
                    model: s.model.to_string(),
                    dataset: s.dataset_id.clone(),
                    source: MetricsError::KExceedsSamples {
                        k,
                        n: s.answers_per_task,
                    },
                });
            }
            m.pass_at_k
                .get(&k)
                .map_or_else(|| "n/a".to_string(), |v| format_percent(*v))
        }
        Metric::PassRate => {
            if m.tasks == 0 {
                "n/a".to_string()
            } else {
                format_percent(m.pass_rate)
            }
        }
        Metric::TokensPerSecond => format!("{:.1}", m.tokens_per_second),
        Metric::TotalTokens => m.total_tokens.to_string(),
        Metric::Tasks => m.tasks.to_string(),
        Metric::Skipped => m.skipped.to_string(),
    })
}

/// Summaries with a row-label suffix for sweep points.
fn collect(dir: &Path) -> Result<Vec<(String, RunSummary)>, ReportError> {
    if let Some(index) = load_sweep_index(dir)? {
        let mut all = Vec::new();
        for entry in index.runs {
            let mut label = format!(" [t={} p={}", entry.point.temperature, entry.point.top_p);
            if let Some(v) = &entry.point.prompt_variant {
                label.push_str(&format!(" v={v}"));
            }
            label.push(']');
            for s in load_summaries(&dir.join(&entry.dir))? {
                all.push((label.clone(), s));
            }
        }
        return Ok(all);
    }
    Ok(load_summaries(dir)?.into_iter().map(|s| (String::new(), s)).collect())
}

fn push_unique(list: &mut Vec<String>, item: String) {
    if !list.contains(&item) {
        list.push(item);
    }
}

pub fn build_report(request: &ReportRequest) -> Result<ReportTable, ReportError> {
    if request.metrics.is_empty() {
        return Err(ReportError::NoMetrics);
    }
    let summaries = collect(&request.results_dir)?;
    if summaries.is_empty() {
        return Err(ReportError::Empty(request.results_dir.clone()));
    }
    let key = |(suffix, s): &(String, RunSummary)| -> (String, String) {
        let model = format!("{}{suffix}", s.model);
        match request.group_by {
            GroupBy::Model => (model, s.dataset_id.clone()),
            GroupBy::Dataset => (s.dataset_id.clone(), model),
        }
    };
    let mut rows_keys = Vec::new();
    let mut col_keys = Vec::new();
    for item in &summaries {
        let (r, c) = key(item);
        push_unique(&mut rows_keys, r);
        push_unique(&mut col_keys, c);
    }
    let mut header = vec![match request.group_by {
        GroupBy::Model => "Model".to_string(),
        GroupBy::Dataset => "Dataset".to_string(),
    }];
    for c in &col_keys {
        for m in &request.metrics {
            header.push(if col_keys.len() == 1 {
                m.to_string()
            } else {
                format!("{c} {m}")
            });
        }
    }
    let mut rows = Vec::new();
    for r in &rows_keys {
        let mut row = vec![r.clone()];
        for c in &col_keys {
            let found = summaries.iter().find(|item| key(item) == (r.clone(), c.clone()));
            for m in &request.metrics {
                row.push(match found {
                    Some((_, s)) => metric_cell(*m, s)?,
                    None => "-".to_string(),
                });
            }
        }
        rows.push(row);
    }
    Ok(ReportTable { header, rows })
}

fn csv_cell(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

impl ReportTable {
    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => {
                let mut out = String::new();
                for row in std::iter::once(&self.header).chain(&self.rows) {
                    out.push_str(&row.iter().map(|c| csv_cell(c)).collect::<Vec<_>>().join(","));
                    out.push('\n');
                }
                out
            }
            OutputFormat::Table => {
                let widths: Vec<usize> = (0..self.header.len())
                    .map(|i| {
                        std::iter::once(&self.header)
                            .chain(&self.rows)
                            .map(|r| r[i].chars().count())
                            .max()
                            .unwrap_or(0)
                    })
                    .collect();
                let line = |row: &[String]| {
                    row.iter()
                        .enumerate()
                        .map(|(i, c)| {
                            if i == 0 {
                                format!("{c:<w$}", w = widths[i])
                            } else {
                                format!("{c:>w$}", w = widths[i])
                            }
                        })
                        .collect::<Vec<_>>()
                        .join("  ")
                        .trim_end()
                        .to_string()
                };
                let mut out = line(&self.header);
                out.push('\n');
                out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
                out.push('\n');
                for row in &self.rows {
                    out.push_str(&line(row));
                    out.push('\n');
                }
                out
            }
        }
    }
}

pub fn cmd_report(request: &ReportRequest) -> Result<String, ReportError> {
    Ok(build_report(request)?.render(request.format))
}
