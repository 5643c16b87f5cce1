//! Comparison of run results against the reported measurements.

use std::path::PathBuf;

use crate::experiments::manifest_dir;
use crate::manifest::RunManifest;
use crate::CliError;

/// A reported value and the manifest result it is compared with.
pub struct Reference {
    pub quantity: &'static str,
    pub paper_value: f64,
    pub result_key: &'static str,
}

pub const REFERENCES: &[Reference] = &[
    Reference { quantity: "holding_force_0mm_N", paper_value: 14.6, result_key: "force_0mm_N" },
    Reference { quantity: "holding_force_0.1mm_N", paper_value: 7.7, result_key: "force_0.1mm_N" },
    Reference { quantity: "holding_force_1mm_N", paper_value: 2.34, result_key: "force_1mm_N" },
    Reference { quantity: "pulse_energy_J", paper_value: 0.3, result_key: "pulse_energy_J" },
    Reference { quantity: "docking_success_rate_0deg", paper_value: 0.591, result_key: "dock_rate_alpha0" },
    Reference { quantity: "docking_success_rate_10deg", paper_value: 0.551, result_key: "dock_rate_alpha10" },
    Reference { quantity: "docking_success_rate_20deg", paper_value: 0.449, result_key: "dock_rate_alpha20" },
    Reference { quantity: "loop_efficiency_80ml_min", paper_value: 0.61, result_key: "fluid_loop_80_efficiency" },
    Reference { quantity: "loop_efficiency_90ml_min", paper_value: 0.62, result_key: "fluid_loop_90_efficiency" },
    Reference { quantity: "loop_efficiency_100ml_min", paper_value: 0.65, result_key: "fluid_loop_100_efficiency" },
    Reference { quantity: "dual_efficiency_102ml_min", paper_value: 0.95, result_key: "fluid_dual_102_efficiency" },
    Reference { quantity: "dual_efficiency_140ml_min", paper_value: 0.97, result_key: "fluid_dual_140_efficiency" },
    Reference { quantity: "dual_efficiency_175ml_min", paper_value: 0.98, result_key: "fluid_dual_175_efficiency" },
    Reference { quantity: "axial_extension_mm", paper_value: 20.0, result_key: "flex_axial_mm" },
    Reference { quantity: "bend_angle_deg", paper_value: 30.0, result_key: "flex_bend_deg" },
    Reference { quantity: "lateral_offset_mm", paper_value: 6.0, result_key: "flex_lateral_mm" },
    Reference { quantity: "connection_distance_mm", paper_value: 132.0, result_key: "flex_distance_mm" },
    Reference { quantity: "fluidic_angular_tolerance_deg", paper_value: 20.0, result_key: "flex_fluidic_bend_deg" },
];

pub struct Report {
    pub csv: String,
    pub absent: usize,
}

/// Builds the table from the given manifests. No manifests gives an empty
/// table; otherwise every reference gets a row, marked absent when no
/// manifest supplied it. Unreadable manifests are listed as absent too.
pub fn build_report(paths: &[PathBuf]) -> Result<Report, CliError> {
    let mut csv = String::from("quantity,paper_value,model_value,rel_error\n");
    if paths.is_empty() {
        return Ok(Report { csv, absent: 0 });
    }
    let mut absent = 0;
    let mut manifests = Vec::new();
    for p in paths {
        if !p.exists() {
            csv += &format!("manifest:{},,absent,\n", p.display());
            absent += 1;
            continue;
        }
        let m = RunManifest::load(p)?;
        m.verify(&manifest_dir(p))?;
        manifests.push(m);
    }
    for r in REFERENCES {
        match manifests.iter().rev().find_map(|m| m.results.get(r.result_key)) {
            Some(&v) => {
                let rel = (v - r.paper_value).abs() / r.paper_value.abs();
                csv += &format!("{},{},{v:.6},{rel:.6}\n", r.quantity, r.paper_value);
            }
            None => {
                csv += &format!("{},{},absent,\n", r.quantity, r.paper_value);
                absent += 1;
            }
        }
    }
    Ok(Report { csv, absent })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_header_only() {
        let r = build_report(&[]).unwrap();
        assert_eq!(r.csv, "quantity,paper_value,model_value,rel_error\n");
        assert_eq!(r.absent, 0);
    }

    #[test]
    fn missing_manifest_is_listed_absent() {
        let r = build_report(&[PathBuf::from("/nonexistent/force_gap.manifest.json")]).unwrap();
        assert!(r.csv.contains("manifest:/nonexistent/force_gap.manifest.json,,absent,"));
        assert_eq!(r.absent, 1 + REFERENCES.len());
    }
}
