use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use heatlab_core::workspace::write_json;

pub const MANIFEST_DIR: &str = "manifests";

/// Record of one command run, written to `<root>/manifests/<command>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// SHA-256 of the effective config as compact JSON.
    pub config_hash: String,
    /// Workspace config after command-line overrides, plus command parameters.
    pub effective_config: Value,
    pub inputs: Vec<PathBuf>,
    /// Relative to the manifest's root directory.
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub toolkit_version: String,
    pub wall_time_ms: u64,
    pub summary: Value,
}

pub fn config_hash(config: &Value) -> String {
    let bytes = serde_json::to_vec(config).expect("JSON values always serialize");
    hex::encode(Sha256::digest(&bytes))
}

impl RunManifest {
    pub fn path(root: &Path, command: &str) -> PathBuf {
        root.join(MANIFEST_DIR).join(format!("{command}.json"))
    }

    pub fn write(&self, root: &Path) -> heatlab_core::Result<PathBuf> {
        let path = Self::path(root, &self.command);
        write_json(&path, self)?;
        Ok(path)
    }
}
