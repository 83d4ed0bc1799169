//! Output bookkeeping: atomic writes and the run manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use apgw::io::{atomic_write, file_digest, sha256_hex, RunManifest};

#[derive(Debug)]
pub enum Failure {
    Io(String),
    Validation(String),
    Convergence(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Io(m) | Failure::Validation(m) => f.write_str(m),
            Failure::Convergence(m) => write!(f, "convergence failure: {m}"),
        }
    }
}

impl From<apgw::Error> for Failure {
    fn from(e: apgw::Error) -> Self {
        match e {
            apgw::Error::Io(m) => Failure::Io(m),
            other => Failure::Validation(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Tracks inputs and outputs of one invocation.
pub struct Run {
    out_dir: PathBuf,
    command: String,
    seed: u64,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    started: SystemTime,
    clock: Instant,
}

impl Run {
    pub fn new(out_dir: &Path, seed: u64) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
            command: std::env::args().collect::<Vec<_>>().join(" "),
            seed,
            config: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    /// Effective configuration, hashed into the manifest.
    pub fn set_config(&mut self, config: serde_json::Value) {
        self.config = config;
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let digest = file_digest(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        atomic_write(&self.out_dir.join(name), bytes)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &serde_json::Value) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
        self.write(name, text.as_bytes())
    }

    pub fn finish(self) -> CliResult<()> {
        let config_text = serde_json::to_string(&self.config).map_err(|e| Failure::Io(e.to_string()))?;
        let manifest = RunManifest {
            command: self.command,
            config_hash: sha256_hex(config_text.as_bytes()),
            seed: self.seed,
            inputs: self.inputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: self.started.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64()),
            wall_clock_seconds: self.clock.elapsed().as_secs_f64(),
            outputs: self.outputs,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Io(e.to_string()))?;
        atomic_write(&self.out_dir.join("manifest.json"), text.as_bytes())?;
        Ok(())
    }
}
