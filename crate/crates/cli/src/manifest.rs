//! Output directories that clean up after failed runs, and the manifest
//! every successful run leaves behind.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use prm_drift::io::{sha256_file, sha256_hex, to_json_pretty};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Resolved options, config file and flags merged; output paths omitted.
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
}

/// Files written by one run. Unless [`OutputDir::finish`] is called, every
/// file written is removed on drop, and so is the directory if this run
/// created it.
pub struct OutputDir {
    dir: PathBuf,
    created: bool,
    written: Vec<(String, String)>,
    done: bool,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        let created = !dir.exists();
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created,
            written: Vec::new(),
            done: false,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        // record before writing so a half-written file is also removed
        self.written.retain(|(n, _)| n != name);
        self.written.push((name.to_string(), sha256_hex(bytes)));
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, to_json_pretty(value)?.as_bytes())
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> prm_drift::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    /// Writes the manifest and keeps everything.
    pub fn finish(mut self, command: &str, config: serde_json::Value, inputs: &[PathBuf]) -> Result<Manifest> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            inputs,
            outputs: self
                .written
                .iter()
                .map(|(path, sha256)| FileDigest {
                    path: path.clone(),
                    sha256: sha256.clone(),
                })
                .collect(),
        };
        self.write_json(MANIFEST, &manifest)?;
        self.done = true;
        Ok(manifest)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.done {
            return;
        }
        for (name, _) in &self.written {
            let _ = fs::remove_file(self.dir.join(name));
        }
        if self.created {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}
