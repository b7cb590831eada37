//! Write-once run directories: config copy, outputs, and a manifest that
//! records the master seed, the config hash and every output's hash.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::seeds::sha256_hex;

pub const MANIFEST: &str = "manifest.toml";
pub const CONFIG_COPY: &str = "config.toml";

#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    outputs: Vec<OutputEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub version: String,
    /// "ok", "violations", "diverged", "partial" ...
    pub status: String,
    pub failures: Vec<String>,
    pub outputs: Vec<OutputEntry>,
}

impl RunDir {
    /// Creates `root`; an existing non-empty directory is refused.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if root.exists() {
            let empty = fs::read_dir(&root)
                .map_err(|e| LabError::io(&root, e))?
                .next()
                .is_none();
            if !empty {
                return Err(LabError::RunDirExists(root));
            }
        }
        fs::create_dir_all(&root).map_err(|e| LabError::io(&root, e))?;
        Ok(Self {
            root,
            outputs: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` to `name` (may contain `/`). Files are never replaced.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if name == MANIFEST || self.outputs.iter().any(|o| o.name == name) {
            return Err(LabError::DuplicateOutput(name.into()));
        }
        self.write_raw(name, bytes)?;
        self.outputs.push(OutputEntry {
            name: name.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn write_raw(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
        }
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| LabError::io(&path, e))?;
        f.write_all(bytes).map_err(|e| LabError::io(&path, e))
    }

    pub fn finish(self, command: &str, seed: u64, config_text: &str, status: &str, failures: Vec<String>) -> Result<PathBuf> {
        let mut outputs = self.outputs.clone();
        outputs.sort_by(|a, b| a.name.cmp(&b.name));
        let manifest = Manifest {
            command: command.into(),
            seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
            version: env!("CARGO_PKG_VERSION").into(),
            status: status.into(),
            failures,
            outputs,
        };
        let text = toml::to_string(&manifest).expect("manifest serializes");
        self.write_raw(MANIFEST, text.as_bytes())?;
        Ok(self.root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outputs_are_write_once() {
        let tmp = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(tmp.path().join("run")).unwrap();
        run.write("a/b.csv", b"x\n1\n").unwrap();
        assert!(matches!(run.write("a/b.csv", b"y"), Err(LabError::DuplicateOutput(_))));
        let root = run.finish("simulate", 3, "seed = 3\n", "ok", vec![]).unwrap();
        let manifest = fs::read_to_string(root.join(MANIFEST)).unwrap();
        assert!(manifest.contains("seed = 3"));
        assert!(manifest.contains(&sha256_hex(b"x\n1\n")));
        assert!(matches!(RunDir::create(&root), Err(LabError::RunDirExists(_))));
    }
}
