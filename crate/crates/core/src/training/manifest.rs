use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything needed to reproduce a run, minus the data itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub data_sha256: String,
    pub config: serde_json::Value,
}

impl RunManifest {
    /// `data` is the canonical serialized dataset (JSONL plus sidecar).
    pub fn new<C: Serialize>(command: &str, seed: u64, cfg: &C, data: &[u8]) -> Self {
        let config = serde_json::to_value(cfg).expect("config serializes");
        Self {
            command: command.to_string(),
            version: concat!("bdg-core ", env!("CARGO_PKG_VERSION")).to_string(),
            seed,
            config_sha256: sha256_hex(config.to_string().as_bytes()),
            data_sha256: sha256_hex(data),
            config,
        }
    }
}
