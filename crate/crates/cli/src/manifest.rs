//! Run manifests: what ran, on which inputs, with which effective configuration.

use std::fs;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the compact JSON of `effective_config`.
    pub config_hash: String,
    pub effective_config: Value,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
    pub seed: Option<u64>,
    pub software_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub status: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Collects manifest fields while a command runs.
#[derive(Debug)]
pub struct ManifestBuilder {
    command: String,
    started_at: String,
    inputs: Vec<FileDigest>,
    config: Value,
    seed: Option<u64>,
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        Self { command: command.into(), started_at: now(), inputs: Vec::new(), config: Value::Null, seed: None }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let sha256 = file_digest(path)?;
        self.inputs.push(FileDigest { path: path.display().to_string(), sha256 });
        Ok(())
    }

    pub fn config(&mut self, config: Value) {
        self.config = config;
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    /// Writes `manifest.json` into `out_dir`, digesting the listed outputs that exist.
    pub fn finish(self, out_dir: &Path, outputs: &[&str], status: &str) -> Result<RunManifest, CliError> {
        let mut digests = Vec::new();
        for name in outputs {
            let path = out_dir.join(name);
            if path.exists() {
                digests.push(FileDigest { path: name.to_string(), sha256: file_digest(&path)? });
            }
        }
        let manifest = RunManifest {
            command: self.command,
            config_hash: sha256_hex(&serde_json::to_vec(&self.config).expect("JSON value serializes")),
            effective_config: self.config,
            inputs: self.inputs,
            outputs: digests,
            seed: self.seed,
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: self.started_at,
            finished_at: now(),
            status: status.to_string(),
        };
        povmap_core::io::write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}
