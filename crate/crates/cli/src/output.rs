//! Run directories and their manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    command: &'a str,
    run_id: &'a str,
    config: &'a serde_json::Value,
    files: &'a BTreeMap<String, FileEntry>,
}

/// An output directory. Every file goes through `write` so the manifest
/// can list it with its checksum.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    files: BTreeMap<String, FileEntry>,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Ok(RunDir {
            root,
            files: BTreeMap::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.insert(
            name.to_string(),
            FileEntry {
                bytes: bytes.len() as u64,
                sha256: sha256_hex(bytes),
            },
        );
        Ok(())
    }

    /// Buffers whatever `f` writes, then stores it as `name`.
    pub fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> phc_core::Result<()>,
    ) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf).with_context(|| format!("formatting {name}"))?;
        self.write(name, &buf)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.write(name, &buf)
    }

    /// Registers a file written by someone else (a sub-run directory).
    pub fn adopt(&mut self, prefix: &str, other: &RunDir) {
        for (name, entry) in &other.files {
            self.files.insert(format!("{prefix}/{name}"), entry.clone());
        }
    }

    /// Writes `manifest.json` last, so its presence marks a complete run.
    pub fn finish(mut self, command: &str, run_id: &str, config: &serde_json::Value) -> Result<PathBuf> {
        let files = std::mem::take(&mut self.files);
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: phc_core::VERSION,
            command,
            run_id,
            config,
            files: &files,
        };
        let mut buf = serde_json::to_vec_pretty(&m)?;
        buf.push(b'\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.root)
    }
}
