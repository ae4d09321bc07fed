//! Record of what a run consumed and produced.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the canonical configuration text
    pub config_hash: String,
    pub config: String,
    pub version: String,
    /// per-path seeds in path order
    pub seeds: Vec<u64>,
    /// produced files relative to the output directory, with their SHA-256
    pub files: Vec<(String, String)>,
    /// wall-clock seconds per stage
    pub timings: Vec<(String, f64)>,
}

impl RunManifest {
    pub fn new(config: &crate::io::config::SolverConfig) -> Self {
        Self {
            config_hash: config.hash(),
            config: config.to_text(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            ..Default::default()
        }
    }

    pub fn add_file(&mut self, name: &str, bytes: &[u8]) {
        self.files
            .push((name.to_string(), crate::io::config::hex_digest(bytes)));
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
