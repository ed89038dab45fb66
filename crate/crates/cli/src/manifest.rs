//! Run manifests and per-run output directories.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Everything needed to repeat a run: the resolved config, seeds and
/// arguments. Timestamps are milliseconds since the Unix epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_paths: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub started_ms: u128,
    pub finished_ms: Option<u128>,
    pub args: Vec<String>,
    pub version: String,
    pub config: RunConfig,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

impl RunManifest {
    pub fn new(command: &str, config_path: Option<&Path>, seeds: &[u64], config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config_paths: config_path.map(Path::to_path_buf).into_iter().collect(),
            seeds: seeds.to_vec(),
            out_dir: PathBuf::new(),
            started_ms: now_ms(),
            finished_ms: None,
            args: std::env::args().collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
        }
    }

    /// Creates `<root>/<command>-<timestamp>[-s<seeds>]`, adding a counter
    /// suffix if that name is taken, and records it as the output directory.
    pub fn create_out_dir(&mut self, root: &Path) -> io::Result<PathBuf> {
        fs::create_dir_all(root)?;
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let mut base = format!("{}-{}", self.command, self.started_ms);
        if !seeds.is_empty() {
            base = format!("{base}-s{}", seeds.join("_"));
        }
        for k in 0.. {
            let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
            let dir = root.join(name);
            match fs::create_dir(&dir) {
                Ok(()) => {
                    self.out_dir = dir.clone();
                    return Ok(dir);
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e),
            }
        }
        unreachable!("unbounded counter")
    }

    pub fn write(&self) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(self.out_dir.join("manifest.json"), text)
    }

    pub fn finish(&mut self) -> io::Result<()> {
        self.finished_ms = Some(now_ms());
        self.write()
    }
}
