use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct InputHash {
    pub path: String,
    /// SHA-256 over `"blob <len>\0"` followed by the file bytes.
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one invocation, written when it starts and rewritten when it ends.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<InputHash>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: String,
    pub error: Option<String>,
    pub artifacts: Vec<String>,
    #[serde(skip)]
    path: PathBuf,
}

pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_input(path: &Path) -> Result<InputHash, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(InputHash {
        path: path.display().to_string(),
        sha256: content_hash(&bytes),
        bytes: bytes.len() as u64,
    })
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

impl RunManifest {
    pub fn begin(
        path: PathBuf,
        command: &str,
        config: serde_json::Value,
        seed: Option<u64>,
        inputs: &[&Path],
    ) -> Result<Self, CliError> {
        let hashed: Result<Vec<_>, _> = inputs.iter().map(|p| hash_input(p)).collect();
        let mut m = Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv: std::env::args().collect(),
            config,
            seed,
            inputs: Vec::new(),
            started_at: now(),
            finished_at: None,
            status: "running".into(),
            error: None,
            artifacts: Vec::new(),
            path,
        };
        match hashed {
            Ok(h) => {
                m.inputs = h;
                m.write()?;
                Ok(m)
            }
            Err(e) => {
                let failed: Result<(), CliError> = Err(e);
                m.clone().finish(&failed)?;
                Err(failed.unwrap_err())
            }
        }
    }

    pub fn artifact(&mut self, p: &Path) {
        self.artifacts.push(p.display().to_string());
    }

    pub fn finish(mut self, outcome: &Result<(), CliError>) -> Result<(), CliError> {
        self.finished_at = Some(now());
        match outcome {
            Ok(()) => self.status = "ok".into(),
            Err(e) => {
                self.status = "error".into();
                self.error = Some(e.to_string());
            }
        }
        self.write()
    }

    fn write(&self) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&self.path, text + "\n").map_err(|e| CliError::io(&self.path, e))
    }
}
