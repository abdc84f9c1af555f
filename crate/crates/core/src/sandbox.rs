//! Execution of untrusted generated code and analyzer commands.
//!
//! Every command runs as its own process group inside a scratch workspace
//! with a cleared environment, rlimit CPU/memory caps and a wall-clock limit.
//! When networking is disallowed and the kernel permits it, the child is
//! moved into a fresh network namespace. The whole group is killed when the
//! command returns, so no descendant outlives [`SandboxHandle::run_command`].

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzers::{scan, AnalyzerError, Finding, ReportFormat, RuleSet, BUILTIN_ANALYZER_ID};

pub const DEFAULT_WALL_TIME: Duration = Duration::from_secs(60);
pub const DEFAULT_OUTPUT_CAP: usize = 1024 * 1024;
const DEFAULT_PATH: &str = "/usr/local/bin:/usr/bin:/bin";
const POLL_INTERVAL: Duration = Duration::from_millis(5);
/// Exit status reported for a child killed by SIGKILL.
pub const KILL_STATUS: i32 = 128 + libc::SIGKILL;

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("failed to spawn `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: io::Error,
    },
    #[error("invalid sandbox limits: {0}")]
    Limits(String),
    #[error("workspace {0} is not under the scratch root")]
    Workspace(PathBuf),
    #[error("unknown analyzer `{0}`")]
    UnknownAnalyzer(String),
    #[error("analyzer `{id}` crashed (exit {exit_status}): {stderr}")]
    AnalyzerCrashed {
        id: String,
        exit_status: i32,
        stderr: String,
    },
    #[error("analyzer `{id}`: {source}")]
    Report {
        id: String,
        #[source]
        source: AnalyzerError,
    },
    #[error("sandbox i/o: {0}")]
    Io(#[from] io::Error),
}

/// Resource limits applied to each command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxLimits {
    pub cpu_time: Duration,
    pub wall_time: Duration,
    pub memory_bytes: u64,
    pub output_cap: usize,
    pub network_allowed: bool,
    pub parallelism_cap: usize,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self {
            cpu_time: DEFAULT_WALL_TIME,
            wall_time: DEFAULT_WALL_TIME,
            memory_bytes: 2 * 1024 * 1024 * 1024,
            output_cap: DEFAULT_OUTPUT_CAP,
            network_allowed: false,
            parallelism_cap: thread::available_parallelism().map_or(2, |n| n.get()),
        }
    }
}

impl SandboxLimits {
    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.cpu_time.is_zero() || self.wall_time.is_zero() {
            return Err(SandboxError::Limits("time limits must be positive".into()));
        }
        if self.memory_bytes == 0 || self.output_cap == 0 || self.parallelism_cap == 0 {
            return Err(SandboxError::Limits(
                "memory, output cap and parallelism must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Program plus argument vector; no shell interpretation unless the program
/// itself is a shell.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CommandSpec {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdin: Option<String>,
    /// Overrides the handle's wall limit for this command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<Duration>,
}

impl CommandSpec {
    pub fn new<I, S>(program: impl Into<String>, args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            program: program.into(),
            args: args.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    /// `sh -c <script>`
    pub fn shell(script: impl Into<String>) -> Self {
        Self::new("sh", ["-c".to_string(), script.into()])
    }

    pub fn with_wall_time(mut self, limit: Duration) -> Self {
        self.wall_time = Some(limit);
        self
    }

    pub fn with_env(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.env.insert(key.into(), value.into());
        self
    }

    pub fn with_stdin(mut self, input: impl Into<String>) -> Self {
        self.stdin = Some(input.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecOutcome {
    pub exit_status: i32,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
    pub duration: Duration,
    pub stdout_truncated: bool,
    pub stderr_truncated: bool,
}

impl ExecOutcome {
    pub fn success(&self) -> bool {
        self.exit_status == 0 && !self.timed_out
    }
}

/// Keeps the first and last `cap / 2` bytes of a stream.
struct CappedBuffer {
    cap: usize,
    head: Vec<u8>,
    tail: Vec<u8>,
    total: usize,
}

impl CappedBuffer {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            head: Vec::new(),
            tail: Vec::new(),
            total: 0,
        }
    }

    fn push(&mut self, mut chunk: &[u8]) {
        self.total += chunk.len();
        let head_cap = self.cap / 2;
        if self.head.len() < head_cap {
            let take = chunk.len().min(head_cap - self.head.len());
            self.head.extend_from_slice(&chunk[..take]);
            chunk = &chunk[take..];
        }
        if chunk.is_empty() {
            return;
        }
        let tail_cap = self.cap - head_cap;
        self.tail.extend_from_slice(chunk);
        if self.tail.len() > 2 * tail_cap.max(4096) {
            let drop = self.tail.len() - tail_cap;
            self.tail.drain(..drop);
        }
    }

    fn finish(mut self) -> (String, bool) {
        let tail_cap = self.cap - self.cap / 2;
        if self.total <= self.cap {
            self.head.extend_from_slice(&self.tail);
            return (String::from_utf8_lossy(&self.head).into_owned(), false);
        }
        if self.tail.len() > tail_cap {
            let drop = self.tail.len() - tail_cap;
            self.tail.drain(..drop);
        }
        let omitted = self.total - self.head.len() - self.tail.len();
        let mut out = String::from_utf8_lossy(&self.head).into_owned();
        out.push_str(&format!("\n[... truncated {omitted} bytes ...]\n"));
        out.push_str(&String::from_utf8_lossy(&self.tail));
        (out, true)
    }
}

fn drain<R: Read + Send + 'static>(mut reader: R, cap: usize) -> thread::JoinHandle<(String, bool)> {
    thread::spawn(move || {
        let mut buf = CappedBuffer::new(cap);
        let mut chunk = [0u8; 8192];
        loop {
            match reader.read(&mut chunk) {
                Ok(0) => break,
                Ok(n) => buf.push(&chunk[..n]),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        buf.finish()
    })
}

#[derive(Debug)]
struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

/// Namespace flags that worked for a probe child, or none.
fn network_isolation_flags() -> Option<libc::c_int> {
    static FLAGS: OnceLock<Option<libc::c_int>> = OnceLock::new();
    *FLAGS.get_or_init(|| {
        let candidates = [libc::CLONE_NEWNET, libc::CLONE_NEWUSER | libc::CLONE_NEWNET];
        candidates.into_iter().find(|&flags| {
            let mut cmd = Command::new("/bin/sh");
            cmd.args(["-c", "exit 0"])
                .stdin(Stdio::null())
                .stdout(Stdio::null())
                .stderr(Stdio::null());
            // SAFETY: unshare is async-signal-safe and only touches the child.
            unsafe {
                cmd.pre_exec(move || {
                    if libc::unshare(flags) != 0 {
                        return Err(io::Error::last_os_error());
                    }
                    Ok(())
                });
            }
            cmd.status().map(|s| s.success()).unwrap_or(false)
        })
    })
}

/// How an analyzer is invoked.
#[derive(Debug, Clone)]
pub enum AnalyzerKind {
    /// In-process pattern rules.
    Builtin(Arc<RuleSet>),
    /// External command; `{file}` in the arguments is replaced by the scratch
    /// file name, and the report is read from stdout.
    Command {
        command: CommandSpec,
        format: ReportFormat,
        file_name: String,
    },
}

#[derive(Debug, Clone)]
pub struct AnalyzerEntry {
    pub id: String,
    pub kind: AnalyzerKind,
}

impl AnalyzerEntry {
    pub fn is_builtin(&self) -> bool {
        matches!(self.kind, AnalyzerKind::Builtin(_))
    }
}

/// Serializable form of an external analyzer registration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzerCommandSpec {
    pub command: Vec<String>,
    pub format: ReportFormat,
    #[serde(default = "default_scan_file")]
    pub file_name: String,
}

fn default_scan_file() -> String {
    "scan_target.py".into()
}

impl AnalyzerCommandSpec {
    pub fn into_entry(self, id: &str) -> Result<AnalyzerEntry, SandboxError> {
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| SandboxError::Limits(format!("analyzer `{id}` has an empty command")))?;
        Ok(AnalyzerEntry {
            id: id.to_string(),
            kind: AnalyzerKind::Command {
                command: CommandSpec::new(program.clone(), args.iter().cloned()),
                format: self.format,
                file_name: self.file_name,
            },
        })
    }
}

/// Owns a scratch root, the limits, a parallelism gate and the analyzer
/// registry. Cheap to share behind an `Arc`.
#[derive(Debug)]
pub struct SandboxHandle {
    scratch_root: PathBuf,
    limits: SandboxLimits,
    permits: Permits,
    isolation: Option<libc::c_int>,
    analyzers: BTreeMap<String, AnalyzerEntry>,
    keep_artifacts: bool,
    owned_root: bool,
    isolation_prefix: Vec<String>,
}

impl SandboxHandle {
    /// Creates a handle with a fresh scratch directory under `parent` (or the
    /// system temp dir).
    pub fn new(parent: Option<&Path>, limits: SandboxLimits) -> Result<Self, SandboxError> {
        limits.validate()?;
        let base = parent.map(Path::to_path_buf).unwrap_or_else(std::env::temp_dir);
        std::fs::create_dir_all(&base)?;
        let root = tempfile::Builder::new().prefix("codeeval-").tempdir_in(&base)?.keep();
        let isolation = if limits.network_allowed {
            None
        } else {
            network_isolation_flags()
        };
        let mut analyzers = BTreeMap::new();
        analyzers.insert(
            BUILTIN_ANALYZER_ID.to_string(),
            AnalyzerEntry {
                id: BUILTIN_ANALYZER_ID.to_string(),
                kind: AnalyzerKind::Builtin(Arc::new(RuleSet::builtin())),
            },
        );
        Ok(Self {
            scratch_root: root.canonicalize()?,
            permits: Permits {
                available: Mutex::new(limits.parallelism_cap),
                freed: Condvar::new(),
            },
            limits,
            isolation,
            analyzers,
            keep_artifacts: false,
            owned_root: true,
            isolation_prefix: Vec::new(),
        })
    }

    pub fn keep_artifacts(mut self, keep: bool) -> Self {
        self.keep_artifacts = keep;
        self
    }

    /// Wraps every command in a user-supplied isolation tool, e.g.
    /// `["firejail", "--quiet", "--"]`.
    pub fn with_isolation_prefix(mut self, prefix: Vec<String>) -> Self {
        self.isolation_prefix = prefix;
        self
    }

    pub fn scratch_root(&self) -> &Path {
        &self.scratch_root
    }

    pub fn limits(&self) -> &SandboxLimits {
        &self.limits
    }

    /// Whether commands actually run in an isolated network namespace.
    pub fn network_isolated(&self) -> bool {
        self.isolation.is_some()
    }

    pub fn register_analyzer(&mut self, entry: AnalyzerEntry) {
        self.analyzers.insert(entry.id.clone(), entry);
    }

    pub fn analyzer(&self, id: &str) -> Option<&AnalyzerEntry> {
        self.analyzers.get(id)
    }

    /// Creates (or empties) a workspace directory for the given key parts.
    pub fn workspace(&self, parts: &[&str]) -> Result<PathBuf, SandboxError> {
        let mut dir = self.scratch_root.clone();
        for part in parts {
            dir.push(sanitize(part));
        }
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    /// Removes a workspace unless artifacts are kept.
    pub fn release(&self, workspace: &Path) {
        if !self.keep_artifacts && workspace.starts_with(&self.scratch_root) {
            let _ = std::fs::remove_dir_all(workspace);
        }
    }

    pub fn run_command(&self, command: &CommandSpec, workspace: &Path) -> Result<ExecOutcome, SandboxError> {
        let ws = workspace
            .canonicalize()
            .map_err(|_| SandboxError::Workspace(workspace.to_path_buf()))?;
        if !ws.starts_with(&self.scratch_root) {
            return Err(SandboxError::Workspace(workspace.to_path_buf()));
        }
        let wall = command.wall_time.unwrap_or(self.limits.wall_time);
        if wall.is_zero() {
            return Err(SandboxError::Limits("wall time must be positive".into()));
        }
        let _permit = self.permits.acquire();

        let mut cmd = match self.isolation_prefix.split_first() {
            Some((wrapper, wrapper_args)) => {
                let mut c = Command::new(wrapper);
                c.args(wrapper_args).arg(&command.program);
                c
            }
            None => Command::new(&command.program),
        };
        cmd.args(&command.args)
            .current_dir(&ws)
            .env_clear()
            .env("PATH", DEFAULT_PATH)
            .env("HOME", &ws)
            .env("TMPDIR", &ws)
            .env("LANG", "C.UTF-8")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .envs(&command.env)
            .stdin(if command.stdin.is_some() {
                Stdio::piped()
            } else {
                Stdio::null()
            })
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);

        let cpu_secs = self.limits.cpu_time.as_secs_f64().ceil().max(1.0) as libc::rlim_t;
        let mem = self.limits.memory_bytes as libc::rlim_t;
        let isolation = self.isolation;
        // SAFETY: only async-signal-safe libc calls between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                let set = |res, soft: libc::rlim_t, hard: libc::rlim_t| {
                    let lim = libc::rlimit {
                        rlim_cur: soft,
                        rlim_max: hard,
                    };
                    if libc::setrlimit(res, &lim) != 0 {
                        return Err(io::Error::last_os_error());
                    }
                    Ok(())
                };
                set(libc::RLIMIT_CPU, cpu_secs, cpu_secs + 1)?;
                set(libc::RLIMIT_AS, mem, mem)?;
                set(libc::RLIMIT_CORE, 0, 0)?;
                if let Some(flags) = isolation {
                    if libc::unshare(flags) != 0 {
                        return Err(io::Error::last_os_error());
                    }
                }
                Ok(())
            });
        }

        let start = Instant::now();
        let mut child = cmd.spawn().map_err(|source| SandboxError::Spawn {
            program: command.program.clone(),
            source,
        })?;
        let pgid = child.id() as libc::pid_t;
        let cap = self.limits.output_cap;
        let out_reader = drain(child.stdout.take().expect("piped stdout"), cap);
        let err_reader = drain(child.stderr.take().expect("piped stderr"), cap);
        if let (Some(input), Some(mut stdin)) = (command.stdin.clone(), child.stdin.take()) {
            thread::spawn(move || {
                let _ = stdin.write_all(input.as_bytes());
            });
        }

        let mut timed_out = false;
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if start.elapsed() >= wall {
                timed_out = true;
                kill_group(pgid);
                break child.wait()?;
            }
            thread::sleep(POLL_INTERVAL);
        };
        let duration = start.elapsed();
        // reap anything the child left running in its group
        kill_group(pgid);

        let (stdout, stdout_truncated) = out_reader.join().unwrap_or_default();
        let (stderr, stderr_truncated) = err_reader.join().unwrap_or_default();
        let exit_status = if timed_out {
            KILL_STATUS
        } else {
            status.code().or_else(|| status.signal().map(|s| 128 + s)).unwrap_or(-1)
        };
        Ok(ExecOutcome {
            exit_status,
            stdout,
            stderr,
            timed_out,
            duration,
            stdout_truncated,
            stderr_truncated,
        })
    }

    /// Runs a registered analyzer over `source` and returns its findings.
    /// A nonzero exit with an empty report is a crash, never a clean pass.
    pub fn run_analyzer(
        &self,
        analyzer_id: &str,
        source: &str,
        workspace: &Path,
    ) -> Result<Vec<Finding>, SandboxError> {
        let entry = self
            .analyzers
            .get(analyzer_id)
            .ok_or_else(|| SandboxError::UnknownAnalyzer(analyzer_id.to_string()))?;
        match &entry.kind {
            AnalyzerKind::Builtin(rules) => {
                std::fs::write(workspace.join("scan_target.py"), source)?;
                Ok(scan(rules.rules(), source, "scan_target.py"))
            }
            AnalyzerKind::Command {
                command,
                format,
                file_name,
            } => {
                std::fs::write(workspace.join(file_name), source)?;
                let mut cmd = command.clone();
                for arg in &mut cmd.args {
                    *arg = arg.replace("{file}", file_name);
                }
                let outcome = self.run_command(&cmd, workspace)?;
                let report = outcome.stdout.trim();
                if outcome.timed_out || (outcome.exit_status != 0 && report.is_empty()) {
                    return Err(SandboxError::AnalyzerCrashed {
                        id: analyzer_id.to_string(),
                        exit_status: outcome.exit_status,
                        stderr: if outcome.timed_out {
                            "timeout".into()
                        } else {
                            outcome.stderr
                        },
                    });
                }
                if report.is_empty() {
                    return Ok(Vec::new());
                }
                format.parse(report).map_err(|source| SandboxError::Report {
                    id: analyzer_id.to_string(),
                    source,
                })
            }
        }
    }
}

impl Drop for SandboxHandle {
    fn drop(&mut self) {
        if self.owned_root && !self.keep_artifacts {
            let _ = std::fs::remove_dir_all(&self.scratch_root);
        }
    }
}

fn kill_group(pgid: libc::pid_t) {
    // SAFETY: signalling a process group we created; ESRCH is fine.
    unsafe {
        libc::killpg(pgid, libc::SIGKILL);
    }
}

/// Live (non-zombie) processes whose process group is `pgid`, read from
/// `/proc`. Killed descendants reparented to init may linger as zombies
/// until reaped; those are not counted.
pub fn live_group_members(pgid: i32) -> Vec<i32> {
    let Ok(entries) = std::fs::read_dir("/proc") else {
        return Vec::new();
    };
    let mut pids = Vec::new();
    for entry in entries.flatten() {
        let Ok(pid) = entry.file_name().to_string_lossy().parse::<i32>() else {
            continue;
        };
        let Ok(stat) = std::fs::read_to_string(entry.path().join("stat")) else {
            continue;
        };
        // fields after the parenthesised command: state ppid pgrp ...
        let Some(rest) = stat.rfind(')').map(|i| &stat[i + 1..]) else {
            continue;
        };
        let mut fields = rest.split_whitespace();
        let state = fields.next().unwrap_or("");
        let pgrp: i32 = fields.nth(1).and_then(|f| f.parse().ok()).unwrap_or(-1);
        if pgrp == pgid && state != "Z" && state != "X" {
            pids.push(pid);
        }
    }
    pids
}

/// True if any non-zombie process in the group is still running. Allows a
/// short grace period for SIGKILL delivery.
pub fn process_group_alive(pgid: i32) -> bool {
    for _ in 0..50 {
        if live_group_members(pgid).is_empty() {
            return false;
        }
        thread::sleep(Duration::from_millis(10));
    }
    true
}

/// Filesystem-safe name component.
pub fn sanitize(part: &str) -> String {
    let s: String = part
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    match s.as_str() {
        "" | "." | ".." => "_".into(),
        _ => s,
    }
}
