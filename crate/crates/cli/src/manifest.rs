use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const FILE_NAME: &str = "manifest.json";

/// Everything needed to repeat a run; written before any other output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command-line arguments without `--out`.
    pub args: Vec<String>,
    pub config_paths: Vec<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub tool_version: String,
    pub started_at: String,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String], out: &Path, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            args: args.to_vec(),
            config_paths: Vec::new(),
            overrides: Vec::new(),
            seed,
            output_dir: out.to_path_buf(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: chrono::Local::now().to_rfc3339(),
        }
    }

    pub fn with_overrides(mut self, overrides: &[String]) -> Self {
        self.overrides = overrides.to_vec();
        self
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FILE_NAME);
        fs::write(&path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let path = if path.is_dir() { path.join(FILE_NAME) } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Drops `--out DIR` and `--out=DIR` from an argument list.
pub fn strip_out(args: &[String]) -> Vec<String> {
    let mut kept = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            kept.push(a.clone());
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_flags_are_removed() {
        let args: Vec<String> = ["simulate", "--out", "x", "lane_change_slow", "--out=y", "--seed", "3"].iter().map(|s| s.to_string()).collect();
        assert_eq!(strip_out(&args), ["simulate", "lane_change_slow", "--seed", "3"]);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest::new("sweep", &["sweep".into()], dir.path(), 4).with_overrides(&["courtesy.lambda=1".into()]);
        m.write(dir.path()).unwrap();
        assert_eq!(RunManifest::read(dir.path()).unwrap(), m);
    }
}
