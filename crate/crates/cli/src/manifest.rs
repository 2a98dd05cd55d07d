//! Run manifests: what was run, on which inputs, producing which files.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Versions {
    pub lapline: &'static str,
    pub manifest: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// SHA-256 of the resolved configuration text.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub versions: Versions,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub exit_code: i32,
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            config_hash: String::new(),
            seed: None,
            versions: Versions { lapline: env!("CARGO_PKG_VERSION"), manifest: 1 },
            started_unix: now(),
            finished_unix: 0.0,
            inputs: Vec::new(),
            outputs: Vec::new(),
            exit_code: 0,
        }
    }

    pub fn config(&mut self, text: &str) {
        self.config_hash = sha256_hex(text.as_bytes());
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        let sha256 = file_hash(path)?;
        self.inputs.push(FileEntry { path: path.to_path_buf(), sha256 });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> std::io::Result<()> {
        let sha256 = file_hash(path)?;
        self.outputs.push(FileEntry { path: path.to_path_buf(), sha256 });
        Ok(())
    }

    pub fn finish(mut self, path: &Path, exit_code: i32) -> std::io::Result<()> {
        self.finished_unix = now();
        self.exit_code = exit_code;
        let text = serde_json::to_string_pretty(&self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")
    }
}
