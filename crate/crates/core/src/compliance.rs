//! Flexibility envelope of a coupled connector pair.
//!
//! The mating faces are held together by the EPM while the spring behind
//! each face gives way. A deformation is retained as long as the holding
//! force, taken from a force–gap model at the face separation the
//! deformation implies, beats the spring's restoring load along the same
//! axis. Each limit is the largest deformation still retained, found by
//! bisection.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, EpmError, Result};
use crate::force::{predict_force, ForceCalibration};
use crate::magnetics::EpmAssembly;

/// Holding force against face gap.
pub trait ForceModel {
    /// N at `gap` metres.
    fn holding_force(&self, gap: f64) -> f64;
}

/// The calibrated EPM force–gap model.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedForce {
    pub assembly: EpmAssembly,
    pub calibration: ForceCalibration,
}

impl Default for CalibratedForce {
    /// The switched-on connector with the shipped force calibration.
    fn default() -> Self {
        Self { assembly: EpmAssembly::connector_default(), calibration: ForceCalibration::calibrated() }
    }
}

impl ForceModel for CalibratedForce {
    fn holding_force(&self, gap: f64) -> f64 {
        predict_force(&self.assembly, gap, &self.calibration).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantForce(pub f64);

impl ForceModel for ConstantForce {
    fn holding_force(&self, _gap: f64) -> f64 {
        self.0
    }
}

impl<F: Fn(f64) -> f64> ForceModel for F {
    fn holding_force(&self, gap: f64) -> f64 {
        self(gap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpringKind {
    Conical,
    Compression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpringSpec {
    pub kind: SpringKind,
    /// N/m
    pub axial_stiffness: f64,
    /// N·m/rad
    pub bending_stiffness: f64,
    /// N/m
    pub lateral_stiffness: f64,
    /// m
    pub free_length: f64,
    /// m
    pub max_travel: f64,
}

impl SpringSpec {
    /// Compression spring of the mechanical connector, stiffnesses
    /// calibrated against the measured flexibility limits.
    pub fn compression_default() -> Self {
        Self {
            kind: SpringKind::Compression,
            axial_stiffness: 730.648,
            bending_stiffness: 0.241696,
            lateral_stiffness: 2435.49,
            free_length: 30.0e-3,
            max_travel: 25.0e-3,
        }
    }

    /// Conical spring of the fluidic connector.
    pub fn conical_default() -> Self {
        Self {
            kind: SpringKind::Conical,
            axial_stiffness: 730.648,
            bending_stiffness: 0.393384,
            lateral_stiffness: 2435.49,
            free_length: 20.0e-3,
            max_travel: 15.0e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            [self.axial_stiffness, self.bending_stiffness, self.lateral_stiffness]
                .iter()
                .all(|k| *k > 0.0),
            || "spring stiffnesses must be > 0".into(),
        )?;
        ensure(self.max_travel >= 0.0 && self.max_travel <= self.free_length, || {
            "max travel must lie in [0, free length]".into()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlexLimits {
    /// m
    pub axial_extension: f64,
    /// deg
    pub bend_angle: f64,
    /// m
    pub lateral_offset: f64,
    /// m
    pub connection_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectorGeometry {
    /// Length of one connector half, m.
    pub body_length: f64,
    /// m²
    pub face_area: f64,
    /// Distance from the face centre to the pivot edge when bending, m.
    pub lever_arm: f64,
    /// Face gap per unit deformation (per metre of extension or offset,
    /// per metre of edge lift when bending). Zero keeps the faces closed
    /// and lets the springs take up the whole deformation.
    pub gap_ratio: f64,
}

impl Default for ConnectorGeometry {
    fn default() -> Self {
        Self {
            body_length: 46.0e-3,
            face_area: crate::magnetics::END_CAP_AREA,
            lever_arm: 10.0e-3,
            gap_ratio: 0.0,
        }
    }
}

impl ConnectorGeometry {
    pub fn validate(&self) -> Result<()> {
        ensure(self.body_length > 0.0, || "body length must be > 0".into())?;
        ensure(self.lever_arm > 0.0, || "lever arm must be > 0".into())?;
        ensure(self.gap_ratio >= 0.0, || "gap ratio must be >= 0".into())
    }
}

/// Bisection stops once the bracket is this narrow.
pub const BISECTION_TOLERANCE_M: f64 = 0.01e-3;
pub const BISECTION_TOLERANCE_DEG: f64 = 0.01;
pub const MAX_BISECTION_ITERATIONS: usize = 60;
/// Below this bend the torque balance is linearized.
const SMALL_ANGLE_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub value: f64,
    pub iterations: usize,
}

/// Largest `x` in `[0, hi]` with `holds(x)`, assuming `holds` is true up to
/// some threshold and false beyond it. Returns 0 if even `x = 0` fails.
pub fn bisect_limit(hi: f64, tolerance: f64, holds: impl Fn(f64) -> bool) -> Bisection {
    if !holds(0.0) {
        return Bisection { value: 0.0, iterations: 0 };
    }
    if holds(hi) {
        return Bisection { value: hi, iterations: 0 };
    }
    let (mut lo, mut up) = (0.0, hi);
    let mut iterations = 0;
    while up - lo > tolerance && iterations < MAX_BISECTION_ITERATIONS {
        let mid = 0.5 * (lo + up);
        if holds(mid) {
            lo = mid;
        } else {
            up = mid;
        }
        iterations += 1;
    }
    Bisection { value: lo, iterations }
}

fn axial_holds(x: f64, spring: &SpringSpec, force: &dyn ForceModel, geom: &ConnectorGeometry) -> bool {
    force.holding_force(geom.gap_ratio * x) >= spring.axial_stiffness * x
}

fn lateral_holds(d: f64, spring: &SpringSpec, force: &dyn ForceModel, geom: &ConnectorGeometry) -> bool {
    force.holding_force(geom.gap_ratio * d) >= spring.lateral_stiffness * d
}

/// Holding moment about the pivot edge against the spring's bending
/// moment. Small bends use the linear balance; larger ones resolve the
/// pull through the tilted lever.
fn bend_holds(deg: f64, spring: &SpringSpec, force: &dyn ForceModel, geom: &ConnectorGeometry) -> bool {
    let theta = deg.to_radians();
    let (lift, arm) = if deg < SMALL_ANGLE_DEG {
        (geom.lever_arm * theta, geom.lever_arm)
    } else {
        (geom.lever_arm * theta.sin(), geom.lever_arm * theta.cos())
    };
    force.holding_force(geom.gap_ratio * lift) * arm >= spring.bending_stiffness * theta
}

/// True iff the EPM keeps the faces coupled under the combined deformation;
/// each axis is balanced on its own.
pub fn coupling_retained(
    extension: f64,
    bend_deg: f64,
    offset: f64,
    spring: &SpringSpec,
    force: &dyn ForceModel,
    geometry: &ConnectorGeometry,
) -> Result<bool> {
    spring.validate()?;
    geometry.validate()?;
    ensure(extension >= 0.0 && offset >= 0.0 && bend_deg >= 0.0, || "deformations must be >= 0".into())?;
    if extension > spring.max_travel {
        return Err(EpmError::OutOfTravel { quantity: "axial extension", value: extension, limit: spring.max_travel });
    }
    if offset > spring.max_travel {
        return Err(EpmError::OutOfTravel { quantity: "lateral offset", value: offset, limit: spring.max_travel });
    }
    if bend_deg >= 90.0 {
        return Err(EpmError::OutOfTravel { quantity: "bend angle", value: bend_deg, limit: 90.0 });
    }
    Ok(axial_holds(extension, spring, force, geometry)
        && bend_holds(bend_deg, spring, force, geometry)
        && lateral_holds(offset, spring, force, geometry))
}

/// m, to [`BISECTION_TOLERANCE_M`].
pub fn max_axial_extension(spring: &SpringSpec, force: &dyn ForceModel, geometry: &ConnectorGeometry) -> Result<f64> {
    spring.validate()?;
    geometry.validate()?;
    Ok(bisect_limit(spring.max_travel, BISECTION_TOLERANCE_M, |x| axial_holds(x, spring, force, geometry)).value)
}

/// deg, to [`BISECTION_TOLERANCE_DEG`].
pub fn max_bend_angle(spring: &SpringSpec, force: &dyn ForceModel, geometry: &ConnectorGeometry) -> Result<f64> {
    spring.validate()?;
    geometry.validate()?;
    // Just short of 90°, where the lever vanishes.
    Ok(bisect_limit(89.99, BISECTION_TOLERANCE_DEG, |d| bend_holds(d, spring, force, geometry)).value)
}

/// m, to [`BISECTION_TOLERANCE_M`].
pub fn max_lateral_offset(spring: &SpringSpec, force: &dyn ForceModel, geometry: &ConnectorGeometry) -> Result<f64> {
    spring.validate()?;
    geometry.validate()?;
    Ok(bisect_limit(spring.max_travel, BISECTION_TOLERANCE_M, |d| lateral_holds(d, spring, force, geometry)).value)
}

/// Both bodies end to end plus each half's axial extension, m.
pub fn max_connection_distance(
    halves: [(&ConnectorGeometry, &SpringSpec); 2],
    force: &dyn ForceModel,
) -> Result<f64> {
    let bodies: f64 = halves.iter().map(|(g, _)| g.body_length).sum();
    let mut extensions = 0.0;
    for (geom, spring) in halves {
        extensions += max_axial_extension(spring, force, geom)?;
    }
    Ok(bodies + extensions)
}

/// Largest bend the fluidic connector's conical spring lets the coupled
/// faces follow, deg.
pub fn fluidic_angular_tolerance(spring: &SpringSpec, force: &dyn ForceModel, geometry: &ConnectorGeometry) -> Result<f64> {
    ensure(spring.kind == SpringKind::Conical, || "fluidic tolerance needs the conical spring".into())?;
    max_bend_angle(spring, force, geometry)
}

/// All four limits of a symmetric pair.
pub fn flex_limits(spring: &SpringSpec, force: &dyn ForceModel, geometry: &ConnectorGeometry) -> Result<FlexLimits> {
    Ok(FlexLimits {
        axial_extension: max_axial_extension(spring, force, geometry)?,
        bend_angle: max_bend_angle(spring, force, geometry)?,
        lateral_offset: max_lateral_offset(spring, force, geometry)?,
        connection_distance: max_connection_distance([(geometry, spring), (geometry, spring)], force)?,
    })
}

/// Measured limits the spring calibration aims for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlexTargets {
    /// m
    pub axial_extension: f64,
    /// deg
    pub bend_angle: f64,
    /// m
    pub lateral_offset: f64,
    /// deg
    pub fluidic_bend_angle: f64,
}

impl Default for FlexTargets {
    fn default() -> Self {
        Self { axial_extension: 20.0e-3, bend_angle: 30.0, lateral_offset: 6.0e-3, fluidic_bend_angle: 20.0 }
    }
}

/// Stiffness that puts the balance exactly at `limit` for the given holding
/// load and spring deflection.
fn balancing_stiffness(load: f64, deflection: f64) -> Result<f64> {
    ensure(deflection > 0.0, || "target limits must be > 0".into())?;
    ensure(load > 0.0, || "holding force vanishes at the target limit".into())?;
    Ok(load / deflection)
}

/// Sets the stiffnesses of `compression` and `conical` so that each limit
/// in `targets` sits exactly on its force balance. Travel and lengths are
/// kept from the inputs.
pub fn calibrate_springs(
    targets: &FlexTargets,
    force: &dyn ForceModel,
    geometry: &ConnectorGeometry,
    compression: &SpringSpec,
    conical: &SpringSpec,
) -> Result<(SpringSpec, SpringSpec)> {
    geometry.validate()?;
    let g = geometry.gap_ratio;
    let axial = balancing_stiffness(
        force.holding_force(g * targets.axial_extension),
        targets.axial_extension,
    )?;
    let lateral = balancing_stiffness(
        force.holding_force(g * targets.lateral_offset),
        targets.lateral_offset,
    )?;
    let bending = |deg: f64| -> Result<f64> {
        let theta = deg.to_radians();
        let (lift, arm) = if deg < SMALL_ANGLE_DEG {
            (geometry.lever_arm * theta, geometry.lever_arm)
        } else {
            (geometry.lever_arm * theta.sin(), geometry.lever_arm * theta.cos())
        };
        balancing_stiffness(force.holding_force(g * lift) * arm, theta)
    };
    let mech = SpringSpec {
        axial_stiffness: axial,
        bending_stiffness: bending(targets.bend_angle)?,
        lateral_stiffness: lateral,
        ..*compression
    };
    let fluid = SpringSpec {
        axial_stiffness: axial,
        bending_stiffness: bending(targets.fluidic_bend_angle)?,
        lateral_stiffness: lateral,
        ..*conical
    };
    mech.validate()?;
    fluid.validate()?;
    Ok((mech, fluid))
}
