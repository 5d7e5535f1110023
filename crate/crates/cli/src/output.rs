use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Writes `bytes` to a sibling temporary file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

/// Sends machine-readable output to `path`, or standard output without one.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Enough to rerun a `run` or `simulate` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_paths: Vec<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        let now = Utc::now();
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_paths: Vec::new(),
            seeds: BTreeMap::new(),
            started_at: now,
            finished_at: now,
            outputs: Vec::new(),
        }
    }

    /// Stamps the finish time and writes the manifest into `dir`. Every
    /// listed output must already exist.
    pub fn finish(mut self, dir: &Path) -> Result<PathBuf> {
        if let Some(missing) = self.outputs.iter().find(|p| !p.exists()) {
            anyhow::bail!("manifest output {} was never written", missing.display());
        }
        self.finished_at = Utc::now();
        let path = dir.join("manifest.json");
        write_atomic(&path, &to_json(&self)?)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip_and_missing_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("trials.csv");
        let mut m = RunManifest::start("simulate");
        m.outputs.push(out.clone());
        assert!(m.clone().finish(dir.path()).is_err());

        fs::write(&out, "x").unwrap();
        m.seeds.insert("experiment".into(), 7);
        let path = m.finish(dir.path()).unwrap();
        let back: RunManifest = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        assert_eq!(back.seeds["experiment"], 7);
        assert!(back.finished_at >= back.started_at);
        assert!(!dir.path().join("manifest.json.tmp").exists());
    }
}
