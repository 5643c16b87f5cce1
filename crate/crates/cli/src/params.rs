//! Calibrated model parameters shared between runs. Missing sections fall
//! back to the shipped defaults.

use std::path::Path;

use anyhow::Context;
use epm_core::compliance::{ConnectorGeometry, SpringSpec};
use epm_core::docking::{ArcGeometry, DockingParams};
use epm_core::fluidics::{ChannelGeometry, LossParams};
use epm_core::force::ForceCalibration;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamSet {
    pub force: ForceCalibration,
    pub dock: DockSection,
    pub fluid: FluidSection,
    pub flex: FlexSection,
}

impl Default for ParamSet {
    fn default() -> Self {
        Self {
            force: ForceCalibration::calibrated(),
            dock: DockSection::default(),
            fluid: FluidSection::default(),
            flex: FlexSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DockSection {
    pub params: DockingParams,
    pub geometry: ArcGeometry,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidSection {
    pub losses: LossParams,
    pub geometry: ChannelGeometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlexSection {
    pub compression: SpringSpec,
    pub conical: SpringSpec,
    pub geometry: ConnectorGeometry,
}

impl Default for FlexSection {
    fn default() -> Self {
        Self {
            compression: SpringSpec::compression_default(),
            conical: SpringSpec::conical_default(),
            geometry: ConnectorGeometry::default(),
        }
    }
}

impl ParamSet {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading parameter file {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("parameter file {}: {e}", path.display())))
    }

    /// Loads `path` if it exists, else the defaults.
    pub fn load_or_default(path: &Path) -> Result<Self, CliError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("parameter set serializes")
    }
}
