//! Per-command run record written next to the outputs as `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seeds: BTreeMap<String, u64>,
    pub config: BTreeMap<String, String>,
    pub config_sha256: String,
    pub started: String,
    pub finished: String,
    pub notes: Vec<String>,
    pub files: Vec<FileEntry>,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<(String, u64), CliError> {
    let data = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok((hex(&Sha256::digest(&data)), data.len() as u64))
}

impl RunManifest {
    pub fn begin(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: BTreeMap::from([("run".to_string(), cfg.train.seed)]),
            config: cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            config_sha256: hex(&cfg.hash()),
            started: chrono::Utc::now().to_rfc3339(),
            finished: String::new(),
            notes: Vec::new(),
            files: Vec::new(),
        }
    }

    /// Hashes `out_dir/name` and adds it to the inventory.
    pub fn record(&mut self, out_dir: &Path, name: &str) -> Result<(), CliError> {
        let (sha256, bytes) = sha256_file(&out_dir.join(name))?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256,
            bytes,
        });
        Ok(())
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Stamps the end time and writes `manifest.json` into `out_dir`.
    pub fn finish(mut self, out_dir: &Path) -> Result<Self, CliError> {
        self.finished = chrono::Utc::now().to_rfc3339();
        let path = out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self).map_err(CliError::Json)?;
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(self)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(CliError::Json)
    }

    /// Rebuilds the configuration from the snapshot.
    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let text: String = self.config.iter().map(|(k, v)| format!("{k}: {v}\n")).collect();
        Ok(RunConfig::parse(&text)?)
    }
}
