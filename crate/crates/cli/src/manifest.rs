use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Reproducibility record written next to every output set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical (sorted-key, compact) JSON config.
    pub config_hash: String,
    pub base_seed: Option<u64>,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
    /// SHA-256 of each input data file, keyed by file name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Canonical JSON: object keys sorted, no insignificant whitespace.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // serde_json's default map is ordered by key.
    let v: serde_json::Value = serde_json::to_value(value).expect("config serializes");
    serde_json::to_string(&v).expect("value serializes")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(canonical_json(value).as_bytes())
}

/// Current time, or `SOURCE_DATE_EPOCH` when set so manifests can be reproduced byte for byte.
pub fn timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now);
    now.to_rfc3339_opts(SecondsFormat::Secs, true)
}

impl RunManifest {
    pub fn start<T: Serialize>(command: &str, config: &T, base_seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            config_hash: config_hash(config),
            base_seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started_at: timestamp(),
            finished_at: String::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path, bytes: &[u8]) {
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into());
        self.inputs.insert(name, sha256_hex(bytes));
    }

    pub fn finish(mut self, path: &Path) -> Result<(), CliError> {
        self.finished_at = timestamp();
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes") + "\n";
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}
