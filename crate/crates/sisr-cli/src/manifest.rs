//! Run manifests: every command records its full resolved configuration,
//! seed, and output list, so `sisr rerun <manifest>` regenerates primary
//! outputs byte for byte.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Config,
    pub master_seed: u64,
    pub code_version: String,
    pub svg: bool,
    pub outputs: Vec<String>,
    pub wall_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config, master_seed: u64, svg: bool) -> Self {
        Self {
            command: command.to_string(),
            config: config.clone(),
            master_seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            svg,
            outputs: Vec::new(),
            wall_secs: 0.0,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(format!("manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::new(format!("manifest {}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::new(format!("manifest: {e}")))?;
        std::fs::write(&path, text)
            .map_err(|e| CliError::new(format!("write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Tracks a command's output directory and file list.
pub struct OutputSink {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    started: std::time::Instant,
}

impl OutputSink {
    pub fn new(dir: &Path, manifest: RunManifest) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::new(format!("create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), manifest, started: std::time::Instant::now() })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::new(format!("serialize {name}: {e}")))?;
        std::fs::write(&path, text)
            .map_err(|e| CliError::new(format!("write {}: {e}", path.display())))
    }

    /// Finalize the manifest; wall time is recorded but never part of the
    /// reproducibility contract.
    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.manifest.wall_secs = self.started.elapsed().as_secs_f64();
        self.manifest.save(&self.dir)
    }
}
