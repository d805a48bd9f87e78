//! Run manifest written before any result file.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub controller: &'a str,
    /// Hash of the inputs, stable across reruns of the same experiment.
    pub input_hash: String,
    pub created_unix: u64,
    pub artifacts: Vec<String>,
    pub config: &'a RunConfig,
}

/// Git-style object hash of the command and the resolved configuration, plus
/// the dataset file when one is referenced.
pub fn input_hash(command: &str, seed: u64, controller: &str, cfg: &RunConfig) -> Result<String, CliError> {
    let snapshot = toml::to_string(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let mut body = format!("command {command}\nseed {seed}\ncontroller {controller}\n{snapshot}").into_bytes();
    if let Some(path) = &cfg.data.file {
        body.extend(std::fs::read(path)?);
    }
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", body.len()).as_bytes());
    h.update(&body);
    Ok(hex::encode(h.finalize()))
}

pub fn write(dir: &Path, manifest: &Manifest<'_>) -> Result<(), CliError> {
    let text = toml::to_string(manifest).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}
