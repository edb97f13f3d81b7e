//! Run manifests: every command writes one next to its outputs, recording
//! the full invocation, input hashes, library version, and wall time.
//! Replaying the recorded command reproduces the outputs bit for bit for
//! exact engines and seed for seed for MCMC.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliResult;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub input_hashes: BTreeMap<String, String>,
    pub version: String,
    pub wall_time_ms: u128,
    pub outputs: Vec<String>,
}

pub struct ManifestBuilder {
    command: String,
    argv: Vec<String>,
    seed: Option<u64>,
    input_hashes: BTreeMap<String, String>,
    outputs: Vec<String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, argv: &[String]) -> Self {
        Self {
            command: command.to_string(),
            argv: argv.to_vec(),
            seed: None,
            input_hashes: BTreeMap::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> CliResult<&mut Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| anyhow::anyhow!("cannot read input {}: {e}", path.display()))?;
        self.input_hashes.insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.display().to_string());
        self
    }

    /// Writes `manifest.json` at the given path.
    pub fn write(self, path: &Path) -> CliResult<()> {
        let manifest = RunManifest {
            command: self.command,
            argv: self.argv,
            seed: self.seed,
            input_hashes: self.input_hashes,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_ms: self.started.elapsed().as_millis(),
            outputs: self.outputs,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(path, text)
            .map_err(|e| anyhow::anyhow!("cannot write manifest {}: {e}", path.display()))?;
        Ok(())
    }
}

/// Hash of a file's raw bytes, as used in score-cache keys.
pub fn file_sha256(path: &Path) -> CliResult<[u8; 32]> {
    let bytes = std::fs::read(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    Ok(Sha256::digest(&bytes).into())
}
