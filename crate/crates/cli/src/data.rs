//! Measurement fixtures. The shipped files are compiled in; `--data` points
//! at a replacement.

use std::path::Path;

use epm_core::compliance::FlexTargets;
use epm_core::docking::{RateTarget, GRID_SIZE};
use epm_core::fluidics::FlowMeasurement;
use epm_core::force::ForceMeasurement;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::CliError;

pub const FORCE_GAP: &str = include_str!("../../../data/force_gap.csv");
pub const FLUID_POINTS: &str = include_str!("../../../data/fluid_operating_points.csv");
pub const DOCKING_RATES: &str = include_str!("../../../data/docking_success_rates.csv");
pub const FLEX_LIMITS: &str = include_str!("../../../data/flex_limits.csv");

/// Text of `path`, or `shipped` when no path is given.
pub fn source(path: Option<&Path>, shipped: &'static str) -> Result<(String, String), CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Failure(anyhow::anyhow!("reading {}: {e}", p.display())))?;
            Ok((p.display().to_string(), text))
        }
        None => Ok(("<shipped>".into(), shipped.to_string())),
    }
}

/// Typed rows of a headed CSV. Errors name the file and line.
pub fn parse_rows<T: DeserializeOwned>(name: &str, text: &str) -> Result<Vec<T>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<T>() {
        let row = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Failure(anyhow::anyhow!("{name}: line {line}: malformed row: {e}"))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Deserialize)]
struct ForceRow {
    gap_mm: f64,
    #[serde(rename = "force_N")]
    force_n: f64,
}

pub fn force_measurements(name: &str, text: &str) -> Result<Vec<ForceMeasurement>, CliError> {
    Ok(parse_rows::<ForceRow>(name, text)?
        .into_iter()
        .map(|r| ForceMeasurement { gap: r.gap_mm * 1e-3, force: r.force_n })
        .collect())
}

#[derive(Deserialize)]
struct FluidRow {
    mode: String,
    inlet_ml_min: f64,
    outlet_ml_min: f64,
}

pub fn flow_measurements(name: &str, text: &str) -> Result<Vec<FlowMeasurement>, CliError> {
    parse_rows::<FluidRow>(name, text)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let mode = r.mode.parse().map_err(|e| {
                CliError::Failure(anyhow::anyhow!("{name}: line {}: {e}", i + 2))
            })?;
            Ok(FlowMeasurement { mode, inlet: r.inlet_ml_min, outlet: r.outlet_ml_min })
        })
        .collect()
}

#[derive(Deserialize)]
struct RateRow {
    tilt_deg: f64,
    success_rate: f64,
}

/// Success shares as grid counts.
pub fn rate_targets(name: &str, text: &str) -> Result<Vec<RateTarget>, CliError> {
    let cells = (GRID_SIZE * GRID_SIZE) as f64;
    parse_rows::<RateRow>(name, text)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if !(0.0..=1.0).contains(&r.success_rate) {
                return Err(CliError::Failure(anyhow::anyhow!(
                    "{name}: line {}: success rate {} outside [0, 1]",
                    i + 2,
                    r.success_rate
                )));
            }
            Ok(RateTarget { tilt_deg: r.tilt_deg, success_count: (r.success_rate * cells).round() as usize })
        })
        .collect()
}

#[derive(Deserialize)]
struct LimitRow {
    quantity: String,
    value: f64,
}

/// Named flexibility limits, in the file's mm/deg units.
pub fn limit_rows(name: &str, text: &str) -> Result<Vec<(String, f64)>, CliError> {
    Ok(parse_rows::<LimitRow>(name, text)?.into_iter().map(|r| (r.quantity, r.value)).collect())
}

pub fn flex_targets(name: &str, text: &str) -> Result<FlexTargets, CliError> {
    let rows = limit_rows(name, text)?;
    let get = |q: &str| {
        rows.iter()
            .find(|(k, _)| k == q)
            .map(|(_, v)| *v)
            .ok_or_else(|| CliError::Failure(anyhow::anyhow!("{name}: missing quantity {q}")))
    };
    Ok(FlexTargets {
        axial_extension: get("axial_extension_mm")? * 1e-3,
        bend_angle: get("bend_angle_deg")?,
        lateral_offset: get("lateral_offset_mm")? * 1e-3,
        fluidic_bend_angle: get("fluidic_angular_tolerance_deg")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_fixtures_parse() {
        assert_eq!(force_measurements("f", FORCE_GAP).unwrap().len(), 11);
        assert_eq!(flow_measurements("f", FLUID_POINTS).unwrap().len(), 6);
        let t = rate_targets("f", DOCKING_RATES).unwrap();
        assert_eq!(t.iter().map(|t| t.success_count).collect::<Vec<_>>(), vec![29, 27, 22]);
        let f = flex_targets("f", FLEX_LIMITS).unwrap();
        assert_eq!(f.bend_angle, 30.0);
    }

    #[test]
    fn malformed_row_names_its_line() {
        let err = force_measurements("bad.csv", "gap_mm,force_N\n0.0,14.6\n0.1,oops\n").unwrap_err();
        assert!(err.to_string().contains("bad.csv: line 3"), "{err}");
    }

    #[test]
    fn unknown_mode_names_its_line() {
        let err = flow_measurements("m.csv", "mode,inlet_ml_min,outlet_ml_min\nloop,80,49\nsideways,1,1\n")
            .unwrap_err();
        assert!(err.to_string().contains("m.csv: line 3"), "{err}");
    }
}
