//! Staged artifact emission and the per-run report.
//!
//! Artifacts are written into a hidden staging directory and moved to the
//! final run directory (named by the config hash) only when the pipeline
//! succeeds, so a failing run never leaves partial outputs behind. The
//! report lists every emitted file with its checksum; everything except the
//! report's own wall-time field is byte-deterministic for a given config.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::errors::CliError;

#[derive(Debug, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config_hash: String,
    pub seeds: SeedSummary,
    pub wall_time_ms: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention_temperature: Option<f64>,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeedSummary {
    pub sampling: u64,
    pub mask: u64,
    pub passkey: u64,
    pub weights: u64,
}

/// A run directory under construction. Dropped without [`RunDir::commit`],
/// the staging directory and everything in it is removed.
pub struct RunDir {
    final_dir: PathBuf,
    staging: PathBuf,
    committed: bool,
    started: Instant,
    artifacts: Vec<ArtifactEntry>,
}

impl RunDir {
    pub fn create(out_root: &Path, command: &str, hash: &str) -> Result<Self, CliError> {
        let final_dir = out_root.join(format!("{command}-{hash}"));
        let staging = out_root.join(format!(".staging-{command}-{hash}"));
        if staging.exists() {
            fs::remove_dir_all(&staging)
                .map_err(|e| CliError::Internal(format!("cannot clear staging dir: {e}")))?;
        }
        fs::create_dir_all(&staging)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", staging.display())))?;
        Ok(Self {
            final_dir,
            staging,
            committed: false,
            started: Instant::now(),
            artifacts: Vec::new(),
        })
    }

    /// Write one artifact file into the staging area.
    pub fn write_file(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.staging.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))?;
        let digest = Sha256::digest(contents.as_bytes());
        self.artifacts.push(ArtifactEntry {
            path: name.to_string(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(())
    }

    /// Finalize: write the report, then atomically move staging into place
    /// (replacing any previous run with the same hash).
    pub fn commit(
        mut self,
        command: &str,
        config_hash: &str,
        seeds: SeedSummary,
        attention_temperature: Option<f64>,
    ) -> Result<PathBuf, CliError> {
        let report = RunReport {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seeds,
            wall_time_ms: self.started.elapsed().as_millis(),
            attention_temperature,
            artifacts: std::mem::take(&mut self.artifacts),
        };
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        fs::write(self.staging.join("report.json"), json)
            .map_err(|e| CliError::Internal(format!("cannot write report: {e}")))?;

        if self.final_dir.exists() {
            fs::remove_dir_all(&self.final_dir)
                .map_err(|e| CliError::Internal(format!("cannot replace previous run: {e}")))?;
        }
        fs::rename(&self.staging, &self.final_dir)
            .map_err(|e| CliError::Internal(format!("cannot finalize run dir: {e}")))?;
        self.committed = true;
        Ok(self.final_dir.clone())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

/// Render a float with 9 significant digits, the fixed width used by every
/// CSV artifact. Undefined values render as `NaN`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.8e}")
    }
}
