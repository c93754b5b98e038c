use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// Everything needed to reproduce an output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// Which evaluators produced the numbers: `analytic`, `oracle`, `simulation`.
    pub provenance: Vec<String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        parameters: serde_json::Value,
        seeds: Vec<u64>,
        provenance: &[&str],
    ) -> Self {
        Self {
            command: command.to_string(),
            parameters,
            seeds,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            provenance: provenance.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text)
    }
}

/// `<out>.manifest.json`
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
