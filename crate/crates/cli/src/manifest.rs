use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Record of one invocation, written next to its outputs. Holds no clock
/// readings, so re-running the same command yields the same file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new<C: Serialize>(subcommand: &'static str, seed: Option<u64>, config: &C) -> Self {
        RunManifest {
            tool: "adaptnmt",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut json = serde_json::to_string_pretty(self).expect("manifest serializes");
        json.push('\n');
        std::fs::write(path, json).map_err(|e| CliError::output(path, e))?;
        log::info!("wrote run manifest {}", path.display());
        Ok(())
    }
}

/// `out.csv` -> `out.csv.run.json`.
pub fn beside(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".run.json");
    PathBuf::from(s)
}
