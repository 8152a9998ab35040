//! Run directories: config snapshot, version, seeds, machine description,
//! per-epoch metrics as JSON lines and a final summary.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

use crate::config::Config;
use crate::error::Result;
use crate::estimator::machine_id;

pub struct RunDir {
    path: PathBuf,
    metrics: File,
}

/// Version string: crate version plus `git describe` when available.
pub fn version_string() -> String {
    let describe = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into());
    format!("hesplit {} ({describe})", env!("CARGO_PKG_VERSION"))
}

/// `base/<role>-<unix seconds>` when no explicit directory is given.
pub fn default_run_path(base: &Path, role: &str) -> PathBuf {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    base.join(format!("{role}-{secs}"))
}

impl RunDir {
    pub fn create(path: &Path, cfg: &Config, role: &str) -> Result<Self> {
        fs::create_dir_all(path)?;
        fs::write(path.join("config.json"), cfg.to_json())?;
        fs::write(path.join("version.txt"), version_string() + "\n")?;
        let seeds = json!({
            "seed": cfg.seed,
            "session_id": cfg.protocol.session_id,
            "role": role,
        });
        fs::write(path.join("seeds.json"), serde_json::to_string_pretty(&seeds)?)?;
        let machine = json!({
            "machine_id": machine_id(),
            "os": std::env::consts::OS,
            "arch": std::env::consts::ARCH,
            "cores": std::thread::available_parallelism().map_or(1, |n| n.get()),
            "threads": rayon::current_num_threads(),
        });
        fs::write(path.join("machine.json"), serde_json::to_string_pretty(&machine)?)?;
        let metrics = OpenOptions::new().create(true).append(true).open(path.join("metrics.jsonl"))?;
        Ok(RunDir { path: path.to_path_buf(), metrics })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<()> {
        writeln!(self.metrics, "{}", serde_json::to_string(record)?)?;
        self.metrics.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        fs::write(self.path.join(name), serde_json::to_string_pretty(value)?)?;
        Ok(())
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path.join(name), text)?;
        Ok(())
    }
}
