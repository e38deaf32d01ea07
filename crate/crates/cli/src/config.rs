//! Settings file for `--config`. Every field is optional; command-line flags win over
//! the file, and the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub chain: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    /// `uniform` or a path to a JSON array of weights.
    pub target: Option<String>,
    pub kind: Option<String>,
    pub tol: Option<f64>,
    pub weights: Option<String>,
    pub trials: Option<usize>,
    pub steps: Option<usize>,
    pub start: Option<usize>,
    pub preset: Option<String>,
    pub duration: Option<f64>,
    pub speed: Option<f64>,
    pub sample_every: Option<f64>,
    pub planners: Option<Vec<String>>,
    pub waypoints: Option<usize>,
    pub samples: Option<usize>,
    pub horizon: Option<usize>,
    pub delta: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
