//! Result files and the run manifest.
//!
//! Every (model, dataset) pair produces `<model>__<dataset>__detail.json`
//! and `<model>__<dataset>__summary.json`. `run_manifest.json` lists every
//! file with its SHA-256 digest. Files are written atomically and the
//! manifest is rewritten after each pair, so an interrupted run leaves only
//! complete, verifiable records behind.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{OrchestratorError, RunRecord, RunSummary, SkipRecord};
use crate::config::ModelSpec;
use crate::sandbox::sanitize;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const HARNESS_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Detail,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub model: String,
    pub dataset: String,
    pub kind: FileKind,
}

/// Output of the external suite for one model, archived verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalArchive {
    pub model: String,
    /// Relative to the results directory.
    pub dir: String,
    pub exit_status: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub harness_version: String,
    pub created: String,
    pub files: Vec<ManifestEntry>,
    #[serde(default)]
    pub skips: Vec<SkipRecord>,
    #[serde(default)]
    pub external: Vec<ExternalArchive>,
    /// Swept values when this directory holds one sweep combination.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sweep: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            harness_version: HARNESS_VERSION.to_string(),
            created: super::timestamp(),
            files: Vec::new(),
            skips: Vec::new(),
            external: Vec::new(),
            sweep: BTreeMap::new(),
        }
    }

    pub fn entry(&self, model: &str, dataset: &str, kind: FileKind) -> Option<&ManifestEntry> {
        self.files
            .iter()
            .find(|e| e.model == model && e.dataset == dataset && e.kind == kind)
    }

    fn upsert(&mut self, entry: ManifestEntry) {
        self.files.retain(|e| e.file != entry.file);
        self.files.push(entry);
        self.files.sort_by(|a, b| a.file.cmp(&b.file));
    }
}

impl Default for Manifest {
    fn default() -> Self {
        Self::new()
    }
}

/// Deterministic file stem for a (model, dataset) pair.
pub fn file_stem(model: &ModelSpec, dataset: &str) -> String {
    format!("{}__{}", sanitize(&model.to_string()), sanitize(dataset))
}

pub fn file_name(model: &ModelSpec, dataset: &str, kind: FileKind) -> String {
    let suffix = match kind {
        FileKind::Detail => "detail",
        FileKind::Summary => "summary",
    };
    format!("{}__{suffix}.json", file_stem(model, dataset))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn persist_err(path: &Path, e: impl std::fmt::Display) -> OrchestratorError {
    OrchestratorError::Persistence {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn to_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("result documents serialize");
    bytes.push(b'\n');
    bytes
}

/// Writes via a temporary file in the same directory and renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), OrchestratorError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| persist_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| persist_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| persist_err(path, e))?;
    tmp.persist(path).map_err(|e| persist_err(path, e.error))?;
    Ok(())
}

/// Incremental writer for one results directory.
#[derive(Debug)]
pub struct ResultsWriter {
    dir: PathBuf,
    manifest: Manifest,
}

impl ResultsWriter {
    /// Opens `dir`. With `resume`, entries of an existing manifest are kept
    /// so completed pairs can be reused.
    pub fn open(dir: &Path, resume: bool) -> Result<Self, OrchestratorError> {
        fs::create_dir_all(dir).map_err(|e| persist_err(dir, e))?;
        let mut manifest = Manifest::new();
        if resume && dir.join(MANIFEST_FILE).exists() {
            let old = load_manifest(dir)?;
            manifest.files = old.files;
            manifest.external = old.external;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn set_sweep(&mut self, values: BTreeMap<String, String>) {
        self.manifest.sweep = values;
    }

    /// A previously persisted, digest-verified record for the pair.
    pub fn completed(&self, model: &ModelSpec, dataset: &str) -> Option<RunRecord> {
        let name = model.to_string();
        let detail = self.manifest.entry(&name, dataset, FileKind::Detail)?;
        let summary = self.manifest.entry(&name, dataset, FileKind::Summary)?;
        verify_entry(&self.dir, summary).ok()?;
        read_verified(&self.dir, detail).ok()
    }

    pub fn write_record(&mut self, record: &RunRecord) -> Result<(), OrchestratorError> {
        let docs = [
            (FileKind::Detail, to_bytes(record)),
            (FileKind::Summary, to_bytes(&record.summary_document())),
        ];
        for (kind, bytes) in docs {
            let file = file_name(&record.model, &record.dataset_id, kind);
            write_atomic(&self.dir.join(&file), &bytes)?;
            self.manifest.upsert(ManifestEntry {
                file,
                sha256: sha256_hex(&bytes),
                model: record.model.to_string(),
                dataset: record.dataset_id.clone(),
                kind,
            });
        }
        self.flush()
    }

    pub fn add_skip(&mut self, skip: SkipRecord) -> Result<(), OrchestratorError> {
        self.manifest.skips.push(skip);
        self.flush()
    }

    pub fn add_external(&mut self, archive: ExternalArchive) -> Result<(), OrchestratorError> {
        self.manifest.external.retain(|a| a.model != archive.model);
        self.manifest.external.push(archive);
        self.flush()
    }

    pub fn flush(&self) -> Result<(), OrchestratorError> {
        write_atomic(&self.dir.join(MANIFEST_FILE), &to_bytes(&self.manifest))
    }

    pub fn finish(self) -> Manifest {
        self.manifest
    }
}

/// Writes records and a manifest into `results_dir`.
pub fn persist_results(records: &[RunRecord], results_dir: &Path) -> Result<Manifest, OrchestratorError> {
    let mut writer = ResultsWriter::open(results_dir, false)?;
    for r in records {
        writer.write_record(r)?;
    }
    writer.flush()?;
    Ok(writer.finish())
}

pub fn load_manifest(dir: &Path) -> Result<Manifest, OrchestratorError> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(OrchestratorError::MissingManifest(dir.to_path_buf()));
    }
    let manifest: Manifest = read_json(&path)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(OrchestratorError::Integrity {
            file: path,
            reason: format!("unsupported schema_version {}", manifest.schema_version),
        });
    }
    Ok(manifest)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, OrchestratorError> {
    let bytes = fs::read(path).map_err(|e| persist_err(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| OrchestratorError::Integrity {
        file: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn verify_entry(dir: &Path, entry: &ManifestEntry) -> Result<Vec<u8>, OrchestratorError> {
    let path = dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(|e| OrchestratorError::Integrity {
        file: path.clone(),
        reason: e.to_string(),
    })?;
    let actual = sha256_hex(&bytes);
    if actual != entry.sha256 {
        return Err(OrchestratorError::Integrity {
            file: path,
            reason: format!("digest mismatch: manifest {}, file {actual}", entry.sha256),
        });
    }
    Ok(bytes)
}

fn read_verified<T: DeserializeOwned>(dir: &Path, entry: &ManifestEntry) -> Result<T, OrchestratorError> {
    let bytes = verify_entry(dir, entry)?;
    serde_json::from_slice(&bytes).map_err(|e| OrchestratorError::Integrity {
        file: dir.join(&entry.file),
        reason: e.to_string(),
    })
}

/// Checks every digest listed in the manifest.
pub fn verify_results(dir: &Path) -> Result<Manifest, OrchestratorError> {
    let manifest = load_manifest(dir)?;
    for entry in &manifest.files {
        verify_entry(dir, entry)?;
    }
    Ok(manifest)
}

/// Loads every summary document after verifying digests.
pub fn load_summaries(dir: &Path) -> Result<Vec<RunSummary>, OrchestratorError> {
    let manifest = verify_results(dir)?;
    manifest
        .files
        .iter()
        .filter(|e| e.kind == FileKind::Summary)
        .map(|e| read_verified(dir, e))
        .collect()
}

pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>, OrchestratorError> {
    let manifest = verify_results(dir)?;
    manifest
        .files
        .iter()
        .filter(|e| e.kind == FileKind::Detail)
        .map(|e| read_verified(dir, e))
        .collect()
}
