use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn hash_file(path: &Path) -> Result<FileHash> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(FileHash {
        path: path.to_path_buf(),
        sha256: format!("{:x}", Sha256::digest(&bytes)),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Timings {
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
    /// Wall time of each stage, in order.
    pub stages: Vec<(String, u128)>,
}

/// Everything needed to rerun a command: the full configuration, the seed,
/// the flags and the hashes of what went in and came out.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub status: String,
    pub version: String,
    pub seed: u64,
    pub flags: Vec<String>,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub timings: Timings,
    pub error: Option<String>,
    #[serde(skip)]
    clock: Option<Instant>,
    #[serde(skip)]
    stage_clock: Option<Instant>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn new(command: &str, seed: u64, flags: Vec<String>, config: BTreeMap<String, String>) -> Self {
        let now = Instant::now();
        RunManifest {
            command: command.to_string(),
            status: "running".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            flags,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Timings {
                started_unix_ms: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0),
                elapsed_ms: 0,
                stages: Vec::new(),
            },
            error: None,
            clock: Some(now),
            stage_clock: Some(now),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(hash_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(hash_file(path)?);
        Ok(())
    }

    /// Closes the running stage under `name`.
    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        let start = self.stage_clock.replace(now).unwrap_or(now);
        self.timings.stages.push((name.to_string(), (now - start).as_millis()));
    }

    pub fn write(&mut self, dir: &Path) -> Result<()> {
        if let Some(c) = self.clock {
            self.timings.elapsed_ms = c.elapsed().as_millis();
        }
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn finish(&mut self, dir: &Path, outcome: &Result<()>) -> Result<()> {
        match outcome {
            Ok(()) => self.status = "ok".into(),
            Err(e) => {
                self.status = "error".into();
                self.error = Some(format!("{e:#}"));
            }
        }
        self.write(dir)
    }
}
