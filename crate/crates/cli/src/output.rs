use crate::CliError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub outputs: Vec<ManifestEntry>,
}

/// Writes artifacts into one directory, each through a temporary file and a rename.
pub struct OutputDir {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", dir.display())))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        self.write_untracked(name, bytes)?;
        self.entries.push(ManifestEntry {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn write_untracked(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Config(format!("cannot write {name}: {e}"));
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.persist(self.dir.join(name)).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes `run_manifest.json` listing every artifact written so far.
    pub fn finish(self, command: &str, seed: u64, config_bytes: &[u8]) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_sha256: sha256_hex(config_bytes),
            outputs: self.entries,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Numerical(e.to_string()))?;
        bytes.push(b'\n');
        let out = OutputDir {
            dir: self.dir,
            entries: Vec::new(),
        };
        out.write_untracked("run_manifest.json", &bytes)
    }
}
