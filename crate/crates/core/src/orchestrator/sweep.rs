//! Parameter sweeps: the full grid of temperature, top-p and prompt
//! variant values, one results directory per combination under
//! `<results_dir>/sweep/`, indexed by `sweep_index.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::persist::{write_atomic, SCHEMA_VERSION};
use super::{Evaluator, OrchestratorError, RunOutcome};
use crate::config::RunConfig;
use crate::sandbox::sanitize;

pub const SWEEP_INDEX_FILE: &str = "sweep_index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_variant: Option<String>,
}

impl SweepPoint {
    /// Directory name, e.g. `t0.32_p0.95` or `t0.8_p0.95_sensitivity-1`.
    pub fn label(&self) -> String {
        let mut s = format!("t{}_p{}", self.temperature, self.top_p);
        if let Some(v) = &self.prompt_variant {
            s.push('_');
            s.push_str(&sanitize(v));
        }
        s
    }

    pub fn values(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("temperature".to_string(), self.temperature.to_string());
        m.insert("top_p".to_string(), self.top_p.to_string());
        if let Some(v) = &self.prompt_variant {
            m.insert("prompt_variant".to_string(), v.clone());
        }
        m
    }

    /// The base configuration with this point's values applied.
    pub fn apply(&self, base: &RunConfig, results_dir: PathBuf) -> RunConfig {
        let mut cfg = base.clone();
        cfg.sweep = None;
        cfg.results_dir = results_dir;
        cfg.generation.temperature = self.temperature;
        cfg.generation.top_p = self.top_p;
        if let Some(v) = &self.prompt_variant {
            cfg.prompt_variant = Some(v.clone());
            for o in cfg.dataset_overrides.values_mut() {
                o.prompt_variant = None;
            }
        }
        cfg
    }
}

/// Grid points in row-major order (temperature, then top-p, then variant).
/// An empty axis contributes the base value.
pub fn sweep_points(cfg: &RunConfig) -> Vec<SweepPoint> {
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let temps = if sweep.temperature.is_empty() {
        vec![cfg.generation.temperature]
    } else {
        sweep.temperature
    };
    let tops = if sweep.top_p.is_empty() {
        vec![cfg.generation.top_p]
    } else {
        sweep.top_p
    };
    let variants: Vec<Option<String>> = if sweep.prompt_variants.is_empty() {
        vec![None]
    } else {
        sweep.prompt_variants.into_iter().map(Some).collect()
    };
    let mut points = Vec::new();
    for &temperature in &temps {
        for &top_p in &tops {
            for v in &variants {
                points.push(SweepPoint {
                    temperature,
                    top_p,
                    prompt_variant: v.clone(),
                });
            }
        }
    }
    points
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepIndexEntry {
    /// Relative to the sweep's results directory.
    pub dir: String,
    pub point: SweepPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepIndex {
    pub schema_version: u32,
    pub runs: Vec<SweepIndexEntry>,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub point: SweepPoint,
    pub outcome: RunOutcome,
}

pub fn load_sweep_index(dir: &Path) -> Result<Option<SweepIndex>, OrchestratorError> {
    let path = dir.join(SWEEP_INDEX_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read(&path).map_err(|e| OrchestratorError::Persistence {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    serde_json::from_slice(&text)
        .map(Some)
        .map_err(|e| OrchestratorError::Integrity {
            file: path,
            reason: e.to_string(),
        })
}

impl Evaluator {
    /// Runs every sweep point as its own evaluation.
    pub fn run_sweep(&self) -> Result<Vec<SweepRun>, OrchestratorError> {
        let base = &self.config;
        let mut runs = Vec::new();
        let mut index = SweepIndex {
            schema_version: SCHEMA_VERSION,
            runs: Vec::new(),
        };
        std::fs::create_dir_all(&base.results_dir).map_err(|e| OrchestratorError::Persistence {
            path: base.results_dir.clone(),
            reason: e.to_string(),
        })?;
        for point in sweep_points(base) {
            let rel = Path::new("sweep").join(point.label());
            let cfg = point.apply(base, base.results_dir.join(&rel));
            log::info!("sweep point {}", point.label());
            let evaluator = Evaluator {
                config: cfg,
                registries: self.registries.clone(),
                backends: self.backends.clone(),
                sweep_values: point.values(),
            };
            let outcome = evaluator.run()?;
            index.runs.push(SweepIndexEntry {
                dir: rel.display().to_string(),
                point: point.clone(),
            });
            let mut bytes = serde_json::to_vec_pretty(&index).expect("index serializes");
            bytes.push(b'\n');
            write_atomic(&base.results_dir.join(SWEEP_INDEX_FILE), &bytes)?;
            runs.push(SweepRun { point, outcome });
        }
        Ok(runs)
    }
}
