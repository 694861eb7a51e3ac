//! Run manifests and canonical config hashing.
//!
//! Every CLI command writes exactly one `manifest.json` into its output
//! directory. The config hash embedded there also lands in checkpoints and
//! evaluation reports, so artifacts can be traced back to the exact
//! configuration that produced them. Timestamps live only in manifests;
//! all other artifacts are byte-identical across reruns of the same
//! seed/config.

use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// FNV-1a over the canonical JSON encoding of a config value.
pub fn config_hash<T: Serialize>(value: &T) -> u64 {
    let json = serde_json::to_string(value).expect("config serializes");
    fnv1a64(json.as_bytes())
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn hash_hex(hash: u64) -> String {
    format!("{hash:016x}")
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub wall_ms: u128,
    /// Per-epoch wall times for training runs; timings belong here, never
    /// in the numeric artifacts.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub epoch_wall_ms: Vec<u128>,
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &str, seed: u64, config: &T) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash: hash_hex(config_hash(config)),
            config: serde_json::to_value(config).expect("config serializes"),
            outputs: Vec::new(),
            wall_ms: 0,
            epoch_wall_ms: Vec::new(),
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self).expect("manifest serializes"))?;
        Ok(())
    }
}
