//! Per-run manifest: config echo, versions, seed and output checksums.
//! Deliberately free of timestamps so identical runs give identical files.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Command, RunConfig};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub status: &'static str,
    pub error: Option<String>,
    pub config: &'a RunConfig,
    pub outputs: Vec<OutputEntry>,
}

pub fn checksum(path: &Path) -> std::io::Result<OutputEntry> {
    let bytes = std::fs::read(path)?;
    Ok(OutputEntry {
        file: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Writes `manifest.json` into `dir` for the listed output files.
pub fn write(
    dir: &Path,
    cmd: Command,
    cfg: &RunConfig,
    files: &[String],
    error: Option<String>,
) -> std::io::Result<()> {
    let mut outputs = files
        .iter()
        .map(|f| checksum(&dir.join(f)))
        .collect::<std::io::Result<Vec<_>>>()?;
    outputs.sort_by(|a, b| a.file.cmp(&b.file));
    let m = Manifest {
        tool: "flapctl",
        version: env!("CARGO_PKG_VERSION"),
        core_version: flapping_core::VERSION,
        command: cmd.name(),
        seed: cfg.seed,
        status: if error.is_some() { "fault" } else { "ok" },
        error,
        config: cfg,
        outputs,
    };
    let mut text = serde_json::to_string_pretty(&m).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(dir.join(FILE_NAME), text)
}
