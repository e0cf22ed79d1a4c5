use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const RUN_MANIFEST: &str = "run_manifest.json";

/// Manifest location for a command writing into directory `dir`.
pub fn in_dir(dir: &Path) -> PathBuf {
    dir.join(RUN_MANIFEST)
}

/// Manifest location for a command writing the single file `out`.
pub fn beside(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".");
    name.push(RUN_MANIFEST);
    PathBuf::from(name)
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub started_unix_ms: u128,
    pub wall_clock_seconds: f64,
}

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub timings: Timings,
}

/// Collects inputs while a command runs, then writes the manifest.
pub struct Recorder {
    command: String,
    inputs: Vec<InputDigest>,
    started: Instant,
    started_unix_ms: u128,
}

impl Recorder {
    pub fn new(command: &str) -> Self {
        Recorder {
            command: command.into(),
            inputs: Vec::new(),
            started: Instant::now(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
        }
    }

    /// Digest of a file, or of every file in a directory in name order.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let mut hasher = Sha256::new();
        if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && !p.to_string_lossy().ends_with(RUN_MANIFEST))
                .collect();
            files.sort();
            for f in files {
                hasher.update(f.file_name().unwrap_or_default().as_encoded_bytes());
                hasher.update(read_bytes(&f)?);
            }
        } else {
            hasher.update(read_bytes(path)?);
        }
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(hasher.finalize()),
        });
        Ok(())
    }

    /// Write the manifest to `path`.
    pub fn finish(self, path: &Path, config: serde_json::Value, seed: Option<u64>) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            config,
            inputs: self.inputs,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            timings: Timings {
                started_unix_ms: self.started_unix_ms,
                wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            },
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
        }
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::runtime(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}
