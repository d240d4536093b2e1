use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to regenerate a run's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    /// Fully resolved config; valid input for `--config`.
    pub config: serde_json::Value,
    /// SHA-256 of the subcommand name and the canonical config JSON.
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_us: Option<f64>,
    pub wall_time_s: f64,
    pub files: Vec<FileEntry>,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(subcommand: &str, config: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    let mut h = Sha256::new();
    h.update(subcommand.as_bytes());
    h.update([0u8]);
    h.update(canonical.as_bytes());
    hex::encode(h.finalize())
}

/// Output directory plus the files written so far.
pub struct Output {
    dir: PathBuf,
    stem: String,
    pub files: Vec<FileEntry>,
}

impl Output {
    pub fn new(dir: &Path, stem: impl Into<String>) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            stem: stem.into(),
            files: Vec::new(),
        })
    }

    /// Writes `<stem><suffix>` and records its hash.
    pub fn write(&mut self, suffix: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let name = format!("{}{suffix}", self.stem);
        let path = self.dir.join(&name);
        fs::write(&path, bytes).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        self.files.push(FileEntry {
            path: name,
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn write_manifest(&self, m: &Manifest) -> CliResult<PathBuf> {
        let path = self.dir.join(format!("{}.manifest.json", self.stem));
        let text = serde_json::to_string_pretty(m).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_subcommand_and_config() {
        let a = serde_json::json!({"x": 1.0});
        let b = serde_json::json!({"x": 2.0});
        assert_eq!(config_hash("storage", &a), config_hash("storage", &a));
        assert_ne!(config_hash("storage", &a), config_hash("storage", &b));
        assert_ne!(config_hash("storage", &a), config_hash("sensing", &a));
        assert_eq!(config_hash("s", &a).len(), 64);
    }
}
