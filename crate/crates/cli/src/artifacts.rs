//! Artifact paths and the `.meta.json` sidecar written next to each one.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Seeds};
use crate::CliError;

pub const WORLD: &str = "world.json";
pub const DATASET: &str = "dataset.lampds";
pub const MODEL: &str = "model.lampmdl";
pub const HISTORY: &str = "train_history.json";
pub const GRAPH: &str = "graph.json";
pub const PRUNED: &str = "graph.pruned.json";
pub const SCORES: &str = "scores.csv";
pub const PLAN: &str = "plan.json";
pub const REPORT: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const ABLATION: &str = "ablation.json";
pub const ABLATION_CSV: &str = "ablation.csv";

/// Provenance of one artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub stage: String,
    pub seeds: Seeds,
    pub config_hash: String,
    /// SHA-256 of every input file, keyed by file name.
    pub inputs: BTreeMap<String, String>,
    pub sha256: String,
    pub version: String,
}

pub fn meta_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    artifact.with_file_name(name)
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::MissingFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Resolves input paths and checks their provenance against the run config.
pub struct Inputs<'a> {
    cfg: &'a RunConfig,
    allow_mismatch: bool,
    used: BTreeMap<String, String>,
}

impl<'a> Inputs<'a> {
    pub fn new(cfg: &'a RunConfig, allow_mismatch: bool) -> Self {
        Inputs {
            cfg,
            allow_mismatch,
            used: BTreeMap::new(),
        }
    }

    /// Records `path` as an input after checking that it exists and that
    /// its sidecar carries this run's config hash.
    pub fn take(&mut self, path: &Path) -> Result<PathBuf, CliError> {
        let digest = file_sha256(path)?;
        let expected = self.cfg.config_hash();
        let found = std::fs::read_to_string(meta_path(path))
            .ok()
            .and_then(|s| serde_json::from_str::<Meta>(&s).ok())
            .map(|m| m.config_hash);
        if found.as_deref() != Some(expected.as_str()) && !self.allow_mismatch {
            return Err(CliError::ConfigMismatch {
                path: path.to_path_buf(),
                expected,
                found: found.unwrap_or_else(|| "none".into()),
            });
        }
        let name = path
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        self.used.insert(name, digest);
        Ok(path.to_path_buf())
    }

    /// Writes `bytes` to `path` with a sidecar naming this stage's inputs.
    pub fn write(&self, stage: &str, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(path, bytes)?;
        let meta = Meta {
            stage: stage.to_string(),
            seeds: self.cfg.seeds,
            config_hash: self.cfg.config_hash(),
            inputs: self.used.clone(),
            sha256: hex::encode(Sha256::digest(bytes)),
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        let json = serde_json::to_string_pretty(&meta).map_err(lamp_core::Error::from)?;
        std::fs::write(meta_path(path), json + "\n")?;
        Ok(())
    }
}
