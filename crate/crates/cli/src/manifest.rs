use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use csma_core::scenario::ExperimentSection;

use crate::error::{CliError, CliResult};

/// Record written next to every result set; enough to rerun it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    /// Name of a bundled scenario or the path it was read from.
    pub scenario_source: String,
    /// Full scenario document as parsed.
    pub scenario: String,
    /// Effective experiment settings after command-line overrides.
    pub experiment: ExperimentSection,
    pub seed: u64,
    pub config_hash: String,
    pub versions: Versions,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Versions {
    pub csmaflow: String,
    pub csma_core: String,
}

impl Versions {
    pub fn current() -> Self {
        Versions { csmaflow: env!("CARGO_PKG_VERSION").into(), csma_core: csma_core::VERSION.into() }
    }
}

/// SHA-256 over the kind, the scenario document and the effective
/// experiment settings.
pub fn config_hash(kind: &str, scenario: &str, experiment: &ExperimentSection) -> CliResult<String> {
    let exp = serde_json::to_string(experiment).map_err(|e| CliError::Schema(e.to_string()))?;
    let mut h = Sha256::new();
    h.update(kind.as_bytes());
    h.update([0]);
    h.update(scenario.as_bytes());
    h.update([0]);
    h.update(exp.as_bytes());
    Ok(format!("{:x}", h.finalize()))
}

impl Manifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("manifest {}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Schema(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }
}
