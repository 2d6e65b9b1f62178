//! Provenance record emitted alongside every artifact.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_checksum: Option<String>,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, corpus_checksum: Option<String>) -> Self {
        Self {
            command: command.to_string(),
            config,
            corpus_checksum,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    /// Identical apart from the timestamp.
    pub fn same_provenance(&self, other: &RunManifest) -> bool {
        self.command == other.command
            && self.config == other.config
            && self.corpus_checksum == other.corpus_checksum
            && self.tool_version == other.tool_version
    }

    /// Writes `<artifact>.manifest.json` and returns its path.
    pub fn write_for(&self, artifact: &Path) -> io::Result<PathBuf> {
        let path = manifest_path(artifact);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Lowercase hex SHA-256 of a file's bytes.
pub fn file_checksum(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}
