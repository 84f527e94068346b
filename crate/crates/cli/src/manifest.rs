//! Run manifest: what ran, on which inputs, producing which files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use floodloss::backtest::ExperimentConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Input paths as given; output paths relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStatus {
    pub name: String,
    pub status: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Option<ExperimentConfig>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub stages: Vec<StageStatus>,
    pub started: String,
    pub finished: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: None,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            stages: Vec::new(),
            started: now(),
            finished: String::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest { path: path.display().to_string(), sha256: file_digest(path)? });
        Ok(())
    }

    pub fn stage(&mut self, name: &str, status: &str, detail: impl Into<String>) {
        self.stages.push(StageStatus { name: name.into(), status: status.into(), detail: detail.into() });
    }

    /// Write `bytes` to `out_dir/rel` and record its digest.
    pub fn write_output(&mut self, out_dir: &Path, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = out_dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(FileDigest { path: rel.to_string(), sha256: sha256_hex(bytes) });
        Ok(path)
    }

    /// Stamp the end time and write `manifest.json` into `out_dir`.
    pub fn finish(mut self, out_dir: &Path) -> Result<PathBuf> {
        self.finished = now();
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let path = out_dir.join(MANIFEST_FILE);
        fs::create_dir_all(out_dir)?;
        fs::write(&path, serde_json::to_string_pretty(&self)?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Recompute every output digest relative to the manifest's directory.
    pub fn verify(path: &Path) -> Result<Self> {
        let m = Self::read(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for o in &m.outputs {
            let got = file_digest(&dir.join(&o.path))?;
            if got != o.sha256 {
                bail!("digest mismatch for {}: manifest {}, file {}", o.path, o.sha256, got);
            }
        }
        Ok(m)
    }
}
