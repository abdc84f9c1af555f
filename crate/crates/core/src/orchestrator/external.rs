//! External benchmark suite hook. The configured command runs once per
//! model; its output directory is copied verbatim under
//! `<results_dir>/external/<model>/`. Its contents are never parsed.

use std::fs;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use super::{ExternalArchive, OrchestratorError};
use crate::config::{ExternalSuiteSpec, ModelSpec};
use crate::sandbox::sanitize;

const POLL: Duration = Duration::from_millis(50);

fn substitute(arg: &str, model: &ModelSpec, endpoint: &str, output_dir: &Path) -> String {
    arg.replace("{model}", &model.backend_id)
        .replace("{endpoint}", endpoint)
        .replace("{output_dir}", &output_dir.display().to_string())
}

pub(crate) fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    fs::create_dir_all(to)?;
    for entry in fs::read_dir(from)? {
        let entry = entry?;
        let target = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_dir(&entry.path(), &target)?;
        } else {
            fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

/// Runs the suite for `model` and archives its output under `results_dir`.
pub fn run_external_suite(
    spec: &ExternalSuiteSpec,
    model: &ModelSpec,
    endpoint: &str,
    results_dir: &Path,
) -> Result<ExternalArchive, OrchestratorError> {
    let unsupported = |msg: String| OrchestratorError::Unsupported(format!("external suite: {msg}"));
    let (program, args) = spec
        .command
        .split_first()
        .ok_or_else(|| unsupported("empty command".into()))?;
    let mut child = Command::new(substitute(program, model, endpoint, &spec.output_dir))
        .args(args.iter().map(|a| substitute(a, model, endpoint, &spec.output_dir)))
        .stdin(Stdio::null())
        .spawn()
        .map_err(|e| unsupported(format!("cannot start `{program}`: {e}")))?;

    let deadline = spec.timeout_secs.map(|s| Instant::now() + Duration::from_secs(s));
    let status = loop {
        if let Some(status) = child.try_wait().map_err(|e| unsupported(e.to_string()))? {
            break status;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            let _ = child.kill();
            let _ = child.wait();
            return Err(unsupported(format!("`{program}` timed out")));
        }
        thread::sleep(POLL);
    };

    let rel = Path::new("external").join(sanitize(&model.to_string()));
    let target = results_dir.join(&rel);
    if target.exists() {
        fs::remove_dir_all(&target).map_err(|e| OrchestratorError::Persistence {
            path: target.clone(),
            reason: e.to_string(),
        })?;
    }
    if spec.output_dir.is_dir() {
        copy_dir(&spec.output_dir, &target).map_err(|e| OrchestratorError::Persistence {
            path: target.clone(),
            reason: e.to_string(),
        })?;
    } else if status.success() {
        return Err(unsupported(format!(
            "output directory {} was not created",
            spec.output_dir.display()
        )));
    }
    Ok(ExternalArchive {
        model: model.to_string(),
        dir: rel.display().to_string(),
        exit_status: status.code().unwrap_or(-1),
    })
}
