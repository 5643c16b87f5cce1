//! Structured experiment configuration. One TOML file holds a section per
//! experiment; command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub output_dir: Option<PathBuf>,
    pub params: Option<PathBuf>,
    /// Recorded for reproducibility; every shipped experiment is deterministic.
    pub seed: Option<u64>,
    #[serde(default)]
    pub winding: WindingConfig,
    #[serde(default)]
    pub force_gap: ForceGapConfig,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default)]
    pub dock: DockConfig,
    #[serde(default)]
    pub fluid: FluidConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindingConfig {
    pub points: Option<usize>,
    pub max_voltage: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceGapConfig {
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub voltage: Option<f64>,
    pub current: Option<f64>,
    pub duration_ms: Option<f64>,
    pub polarity: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DockConfig {
    pub alpha: Option<Vec<f64>>,
    pub spacing_mm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidConfig {
    pub modes: Option<Vec<String>>,
    pub inlets: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub script: Option<PathBuf>,
    pub orientation: Option<f64>,
    pub mtu: Option<usize>,
}

impl ConfigFile {
    /// An empty file is a usage error: it names no experiment settings
    /// and is almost certainly the wrong path.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let table: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
        if table.is_empty() {
            return Err("config file is empty".into());
        }
        table.try_into().map_err(|e: toml::de::Error| e.to_string())
    }
}

/// First of flag, file value, default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
