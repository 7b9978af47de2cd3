//! Provenance records written next to every output.
//!
//! A record names the command, the canonical JSON form of its effective
//! configuration together with its SHA-256, the root seed and the crate
//! versions. Nothing time- or host-dependent is recorded, so reruns produce
//! identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::staging;
use crate::StoreResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    /// Digests of the input files this output was computed from, by role.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    /// Implementation choices that affect the numbers in this output.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub config: serde_json::Value,
}

/// Compact JSON with sorted keys, the form that is hashed.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // `Value` maps are ordered, so a round trip through it sorts every object.
    let v = serde_json::to_value(value).expect("serializable value");
    serde_json::to_string(&v).expect("serializable value")
}

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    format!("{:x}", Sha256::digest(bytes.as_ref()))
}

impl Provenance {
    pub fn new<T: Serialize>(command: &str, config: &T, seed: u64) -> Self {
        let config = serde_json::to_value(config).expect("serializable value");
        let mut versions = BTreeMap::new();
        versions.insert("surrogate".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("surrogate-core".to_string(), surrogate_core::VERSION.to_string());
        Self {
            command: command.to_string(),
            config_sha256: sha256_hex(canonical_json(&config)),
            seed,
            versions,
            inputs: BTreeMap::new(),
            notes: Vec::new(),
            config,
        }
    }

    /// Records the digest of an input file, e.g. a checkpoint's `params.bin`.
    pub fn input(mut self, role: &str, path: &Path) -> StoreResult<Self> {
        let bytes = staging::read(path)?;
        self.inputs.insert(role.to_string(), sha256_hex(bytes));
        Ok(self)
    }

    pub fn note(mut self, note: &str) -> Self {
        self.notes.push(note.to_string());
        self
    }

    pub fn to_json(&self) -> String {
        staging::to_json(self)
    }
}
