//! Run manifest: which tool version produced the outputs, from which config
//! and seeds, and the hash of every file written. Contains no timestamps, so
//! identical runs produce identical manifests.

use std::collections::BTreeMap;
use std::path::Path;

use lvo::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{hex_digest, PipelineConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Hash of the canonical config form.
    pub config_sha256: String,
    pub train_seed: u64,
    pub predict_seed: u64,
    pub deterministic: bool,
    /// Human-readable remarks, e.g. skipped stages.
    pub notes: Vec<String>,
    /// Output-dir-relative path -> sha256 of file contents, sorted by path.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(cfg: &PipelineConfig) -> Manifest {
        Manifest {
            tool: String::from("lvo"),
            version: String::from(env!("CARGO_PKG_VERSION")),
            config_sha256: cfg.sha256(),
            train_seed: cfg.training.seed,
            predict_seed: cfg.prediction.seed,
            deterministic: cfg.prediction.deterministic,
            notes: Vec::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Hash `file` and record it under its path relative to `root`.
    pub fn add_output(&mut self, root: &Path, file: &Path) -> Result<()> {
        let bytes = std::fs::read(file).map_err(|e| Error::io(file, e))?;
        let key = file
            .strip_prefix(root)
            .unwrap_or(file)
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        self.outputs.insert(key, hex_digest(&bytes));
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self)
            .map_err(|e| Error::invalid(format!("manifest serialization: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(format!("{}: {e}", path.display())))
    }
}
