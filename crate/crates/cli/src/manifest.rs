//! `manifest.json`: what each stage consumed and produced, so unchanged
//! stages can be skipped and stale artifacts detected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::{io_err, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_hash: String,
    /// Output paths relative to the output directory, with their SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl StageRecord {
    /// Every recorded output still exists with its recorded content.
    pub fn is_intact(&self, dir: &Path) -> bool {
        self.outputs
            .iter()
            .all(|(rel, hash)| file_hash(&dir.join(rel)).is_ok_and(|h| &h == hash))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub library_version: String,
    pub config_hash: String,
    pub corpus_hash: Option<String>,
    /// Split hash per seed.
    pub split_hashes: BTreeMap<u64, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    /// An empty manifest when the file does not exist yet.
    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(io_err(path, e)),
        }
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        std::fs::write(&path, body).map_err(|e| io_err(path, e))
    }
}

pub fn file_hash(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex(&Sha256::digest(bytes)))
}

pub fn hash_outputs(dir: &Path, rel_paths: &[String]) -> CliResult<BTreeMap<String, String>> {
    rel_paths
        .iter()
        .map(|rel| Ok((rel.clone(), file_hash(&dir.join(rel))?)))
        .collect()
}
