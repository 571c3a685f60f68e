//! Output directories with a manifest of what was written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::Result;

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the validated configuration, independent of key order and
/// formatting in the source file.
pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(
        serde_json::to_string(cfg)
            .expect("config serializes")
            .as_bytes(),
    )
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    config_sha256: String,
    seed: Option<u64>,
    files: &'a BTreeMap<String, String>,
}

/// Collects files for one command run and writes `manifest.json` last.
pub struct OutputDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Writes `rel` (slash-separated, relative to the root).
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    /// Renders into a buffer with `f`, then writes it.
    pub fn write_with(
        &mut self,
        rel: &str,
        f: impl FnOnce(&mut Vec<u8>) -> nejunction_core::Result<()>,
    ) -> Result<PathBuf> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }

    pub fn finish(&self, command: &str, cfg: &RunConfig, seed: Option<u64>) -> Result<PathBuf> {
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_sha256: config_hash(cfg),
            seed,
            files: &self.files,
        };
        let mut text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        text.push('\n');
        let path = self.root.join(MANIFEST);
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
