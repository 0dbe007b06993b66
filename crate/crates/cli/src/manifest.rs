//! Run manifests: the resolved configuration plus digests of everything written.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Experiment;

/// File name of the manifest inside the output directory.
pub const MANIFEST: &str = "manifest.json";

/// One output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// Seconds since the Unix epoch at start.
    pub started_unix: u64,
    pub wall_seconds: f64,
    pub config: Experiment,
    pub outputs: Vec<OutputDigest>,
}

/// SHA-256 of a file as lowercase hex.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digest `files` (relative to `dir`).
pub fn digests(dir: &Path, files: &[PathBuf]) -> Result<Vec<OutputDigest>> {
    files
        .iter()
        .map(|f| {
            let path = dir.join(f);
            Ok(OutputDigest { file: f.display().to_string(), bytes: std::fs::metadata(&path)?.len(), sha256: sha256_file(&path)? })
        })
        .collect()
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
