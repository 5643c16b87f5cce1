//! Holding force of a pair of mated EPM pole faces.
//!
//! Force is the Maxwell stress `B²A/(2μ0)` summed over the two pole faces of
//! the circuit. The flux density at the faces starts from the remanent-state
//! circuit flux at the residual gap (clamped at saturation), is reduced by
//! the leakage fraction, and decays with the opened gap as
//! `((c)/(g + c))^m`, where `c` is the residual gap. An exponent `m = 1` is
//! the ideal lumped-circuit `1/(g + c)` law; measured pull-off curves of
//! AlNiCo-based EPMs fall off faster near contact and slower further out,
//! which a smaller exponent captures.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, EpmError, Result};
use crate::fit::{least_squares, Bounds, FitOptions};
use crate::magnetics::{gap_flux_density, AirGapSpec, EpmAssembly, END_CAP_AREA, MU0};

pub const DEFAULT_DECAY_EXPONENT: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceCalibration {
    /// Fraction of circuit flux bypassing the working gaps, in [0, 1).
    pub leakage_fraction: f64,
    /// m, added to the nominal gap.
    pub residual_gap: f64,
    /// m², per pole face.
    #[serde(default = "default_area")]
    pub effective_area: f64,
    /// Gap decay exponent of the face flux density. Fixed, not fitted.
    #[serde(default = "default_exponent")]
    pub decay_exponent: f64,
    /// Force reported while the EPM is switched off, N.
    #[serde(default)]
    pub residual_force_floor: f64,
}

fn default_area() -> f64 {
    END_CAP_AREA
}

fn default_exponent() -> f64 {
    DEFAULT_DECAY_EXPONENT
}

impl Default for ForceCalibration {
    /// Starting point of the fit.
    fn default() -> Self {
        Self {
            leakage_fraction: 0.3,
            residual_gap: 0.05e-3,
            effective_area: END_CAP_AREA,
            decay_exponent: DEFAULT_DECAY_EXPONENT,
            residual_force_floor: 0.0,
        }
    }
}

impl ForceCalibration {
    /// Fitted to the shipped pull-off fixture (`data/force_gap.csv`).
    pub fn calibrated() -> Self {
        Self {
            leakage_fraction: 0.513401,
            residual_gap: 0.0511060e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure((0.0..1.0).contains(&self.leakage_fraction), || {
            format!("leakage fraction {} outside [0, 1)", self.leakage_fraction)
        })?;
        ensure(self.residual_gap >= 0.0, || "residual gap must be >= 0".into())?;
        ensure(self.effective_area > 0.0, || "effective area must be > 0".into())?;
        ensure(self.decay_exponent > 0.0, || "decay exponent must be > 0".into())?;
        ensure(self.residual_force_floor >= 0.0, || "force floor must be >= 0".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceMeasurement {
    /// m
    pub gap: f64,
    /// N
    pub force: f64,
}

/// Maxwell-stress pull across the two pole faces of the circuit, N.
pub fn holding_force(b_gap: f64, area: f64) -> f64 {
    2.0 * b_gap * b_gap * area / (2.0 * MU0)
}

/// Flux density at the pole faces with the faces opened by `gap`, T.
pub fn face_flux_density(assembly: &EpmAssembly, gap: f64, calib: &ForceCalibration) -> Result<f64> {
    let c = calib.residual_gap;
    let contact = if c > 0.0 {
        let residual = AirGapSpec { thickness: c, area: calib.effective_area };
        gap_flux_density(assembly.remanent_mmf(), &residual, assembly.saturation_flux)?.abs()
    } else {
        assembly.saturation_flux
    };
    let decay = if gap == 0.0 {
        1.0
    } else if c == 0.0 {
        0.0
    } else {
        (c / (gap + c)).powf(calib.decay_exponent)
    };
    Ok((1.0 - calib.leakage_fraction) * contact * decay)
}

pub fn predict_force(assembly: &EpmAssembly, gap: f64, calib: &ForceCalibration) -> Result<f64> {
    calib.validate()?;
    ensure(gap >= 0.0, || format!("gap must be >= 0, got {gap}"))?;
    if !assembly.is_on() {
        return Ok(calib.residual_force_floor);
    }
    let b = face_flux_density(assembly, gap, calib)?;
    Ok(holding_force(b, calib.effective_area))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForceFit {
    pub calibration: ForceCalibration,
    /// N
    pub rmse: f64,
    pub iterations: usize,
}

/// Fits leakage fraction and residual gap to measured pull-off forces. The
/// residual gap is fitted in millimetres for conditioning.
pub fn calibrate_force_model(data: &[ForceMeasurement], assembly: &EpmAssembly) -> Result<ForceFit> {
    calibrate_force_model_from(data, assembly, ForceCalibration::default())
}

pub fn calibrate_force_model_from(
    data: &[ForceMeasurement],
    assembly: &EpmAssembly,
    start: ForceCalibration,
) -> Result<ForceFit> {
    let mut gaps: Vec<f64> = data.iter().map(|m| m.gap).collect();
    gaps.sort_by(f64::total_cmp);
    gaps.dedup();
    if data.len() < 3 || gaps.len() < 3 {
        return Err(EpmError::UnderdeterminedFit { points: gaps.len(), params: 2 });
    }
    for m in data {
        ensure(m.gap >= 0.0 && m.force >= 0.0, || format!("bad measurement {m:?}"))?;
    }
    let mut on = assembly.clone();
    on.alnico.polarization = crate::magnetics::Polarization::Aligned;

    let with = |p: &[f64]| ForceCalibration {
        leakage_fraction: p[0],
        residual_gap: p[1] * 1e-3,
        ..start
    };
    let residuals = |p: &[f64]| -> Result<Vec<f64>> {
        let calib = with(p);
        data.iter()
            .map(|m| Ok(predict_force(&on, m.gap, &calib)? - m.force))
            .collect()
    };
    let bounds = Bounds { lower: vec![0.0, 1e-6], upper: vec![0.999, 10.0] };
    let out = least_squares(
        residuals,
        &[start.leakage_fraction, start.residual_gap * 1e3],
        &bounds,
        FitOptions { max_iterations: 200, ..FitOptions::default() },
    )?;
    Ok(ForceFit {
        calibration: with(&out.params),
        rmse: out.rmse,
        iterations: out.iterations,
    })
}

/// Model force at each gap. Gaps must be ascending.
pub fn force_gap_curve(
    assembly: &EpmAssembly,
    gaps: &[f64],
    calib: &ForceCalibration,
) -> Result<Vec<(f64, f64)>> {
    ensure(gaps.windows(2).all(|w| w[0] <= w[1]), || "gaps must be sorted ascending".into())?;
    gaps.iter()
        .map(|&g| Ok((g, predict_force(assembly, g, calib)?)))
        .collect()
}
