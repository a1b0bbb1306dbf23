//! Run manifest written next to every command's outputs.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::Table;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub status: &'static str,
    pub exit_code: i32,
    pub error: Option<String>,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub rng: Option<&'static str>,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub outputs: Vec<String>,
}

/// Seconds since the epoch, pinned by `SOURCE_DATE_EPOCH` when set.
pub fn timestamp() -> u64 {
    if let Some(v) = std::env::var_os("SOURCE_DATE_EPOCH") {
        if let Some(secs) = v.to_str().and_then(|s| s.trim().parse().ok()) {
            return secs;
        }
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Hash of the effective command configuration (keys sorted).
pub fn config_hash(command: &str, seed: Option<u64>, table: &Table) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("command={command}\n"));
    if let Some(s) = seed {
        hasher.update(format!("seed={s}\n"));
    }
    hasher.update(toml::to_string(table).unwrap_or_default());
    hex::encode(hasher.finalize())
}
