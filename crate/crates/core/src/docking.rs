//! Quasi-static self-alignment of two mating connector faces.
//!
//! The fixed connector sits on a platform tilted by `alpha` about the world
//! y axis. The free connector, a copy of the fixed one flipped to face it,
//! is lowered vertically in fixed height steps. Its internals turn on
//! bearings about the connector axis; at every step the rotor angle relaxes
//! to a friction-limited torque equilibrium under the interaction of the
//! two arc-magnet sets and the EPMs, all modelled as point dipoles. Once the
//! closest point of the free face is within the capture distance of the
//! fixed face, the pose is captured if the magnetic pull towards the mating
//! position beats the gravitational and elastic opposition and the rotor has
//! turned into alignment.

use std::f64::consts::{PI, TAU};

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, EpmError, Result};
use crate::magnetics::MU0;

/// Point-dipole description of one mating face in its own frame: the face
/// lies in the local x-y plane with the outward normal along +z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcMagnetLayout {
    pub dipole_positions: Vec<[f64; 3]>,
    pub dipole_moments: Vec<[f64; 3]>,
    /// Number of leading dipoles belonging to the first arc; the rest form
    /// the second arc.
    pub first_arc_len: usize,
    /// Centre of the EPM pole pair.
    pub epm_position: [f64; 3],
    /// Moment of the pole at `epm_position + epm_pole_offset`; the pole at
    /// `epm_position - epm_pole_offset` carries the opposite moment.
    pub epm_moment: [f64; 3],
    pub epm_pole_offset: [f64; 3],
    pub rotor_axis: [f64; 3],
    /// Radius of the mating face, m.
    pub face_radius: f64,
}

/// Geometry knobs for [`ArcMagnetLayout::symmetric`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcGeometry {
    /// m
    pub arc_radius: f64,
    /// Half the angle each arc subtends, deg.
    pub arc_half_angle_deg: f64,
    pub dipoles_per_arc: usize,
    /// Total moment of one arc magnet, A·m².
    pub arc_moment: f64,
    /// Moment of each EPM pole, A·m².
    pub epm_moment: f64,
    /// Half the distance between the EPM end caps, m.
    pub epm_pole_offset: f64,
    /// m
    pub face_radius: f64,
    /// Direction of the first arc centre and the EPM pole axis in the face
    /// plane, measured from local x, deg.
    pub orientation_deg: f64,
}

impl Default for ArcGeometry {
    fn default() -> Self {
        Self {
            arc_radius: 14.0e-3,
            arc_half_angle_deg: 45.0,
            dipoles_per_arc: 24,
            arc_moment: 0.55,
            epm_moment: 0.07,
            epm_pole_offset: 4.0e-3,
            face_radius: 20.0e-3,
            orientation_deg: 90.0,
        }
    }
}

impl ArcMagnetLayout {
    /// Two opposite-pole arcs centred either side of the face centre along
    /// `orientation_deg`, with the EPM end caps on the same line. For
    /// orientations of 0° or 90° the interaction energy is mirror-symmetric
    /// about the x-z plane.
    pub fn symmetric(geom: &ArcGeometry) -> Result<Self> {
        ensure(geom.dipoles_per_arc >= 2, || "need at least 2 dipoles per arc".into())?;
        ensure(geom.arc_radius > 0.0 && geom.arc_radius < geom.face_radius, || {
            "arc radius must lie inside the face".into()
        })?;
        let n = geom.dipoles_per_arc;
        let half = geom.arc_half_angle_deg.to_radians();
        let per = geom.arc_moment / n as f64;
        let mut positions = Vec::with_capacity(2 * n);
        let mut moments = Vec::with_capacity(2 * n);
        let phi = geom.orientation_deg.to_radians();
        for (centre, sign) in [(phi, 1.0), (phi + PI, -1.0)] {
            for k in 0..n {
                // Midpoints of n equal sub-arcs.
                let t = centre - half + (2.0 * k as f64 + 1.0) * half / n as f64;
                positions.push([geom.arc_radius * t.cos(), geom.arc_radius * t.sin(), 0.0]);
                moments.push([0.0, 0.0, sign * per]);
            }
        }
        let layout = Self {
            dipole_positions: positions,
            dipole_moments: moments,
            first_arc_len: n,
            epm_position: [0.0; 3],
            epm_moment: [0.0, 0.0, geom.epm_moment],
            epm_pole_offset: [geom.epm_pole_offset * phi.cos(), geom.epm_pole_offset * phi.sin(), 0.0],
            rotor_axis: [0.0, 0.0, 1.0],
            face_radius: geom.face_radius,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dipole_positions.len();
        ensure(n == self.dipole_moments.len(), || "positions and moments differ in length".into())?;
        ensure(self.first_arc_len >= 2 && n - self.first_arc_len >= 2, || {
            "each arc needs at least 2 dipoles".into()
        })?;
        ensure(
            self.dipole_moments.iter().all(|m| Vector3::from(*m).norm() > 0.0),
            || "arc dipole moments must be nonzero".into(),
        )?;
        let total = |ms: &[[f64; 3]]| ms.iter().map(|m| Vector3::from(*m)).sum::<Vector3<f64>>();
        let a = total(&self.dipole_moments[..self.first_arc_len]);
        let b = total(&self.dipole_moments[self.first_arc_len..]);
        ensure(a.dot(&b) < 0.0, || "arc magnets must have opposite pole orientation".into())?;
        ensure((Vector3::from(self.rotor_axis).norm() - 1.0).abs() < 1e-9, || {
            "rotor axis must be a unit vector".into()
        })?;
        ensure(self.face_radius > 0.0, || "face radius must be > 0".into())
    }

    fn dipoles(&self) -> impl Iterator<Item = (Point3<f64>, Vector3<f64>)> + '_ {
        self.dipole_positions
            .iter()
            .zip(&self.dipole_moments)
            .map(|(p, m)| (Point3::from(*p), Vector3::from(*m)))
            .chain(self.epm_poles())
    }

    fn epm_poles(&self) -> [(Point3<f64>, Vector3<f64>); 2] {
        let c = Point3::from(self.epm_position);
        let d = Vector3::from(self.epm_pole_offset);
        let m = Vector3::from(self.epm_moment);
        [(c + d, m), (c - d, -m)]
    }
}

/// Force on dipole `m2` at offset `r` (from `m1` to `m2`) and the field of
/// `m1` there.
fn dipole_pair(m1: &Vector3<f64>, m2: &Vector3<f64>, r: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let d2 = r.norm_squared();
    let inv = 1.0 / d2.sqrt();
    let k3 = MU0 / (4.0 * PI) * inv * inv * inv;
    let r_hat = r * inv;
    let m1r = m1.dot(&r_hat);
    let m2r = m2.dot(&r_hat);
    let force = (3.0 * k3 * inv) * (m1r * m2 + m2r * m1 + (m1.dot(m2) - 5.0 * m1r * m2r) * r_hat);
    let field = k3 * (3.0 * m1r * r_hat - m1);
    (force, field)
}

/// Net force on the free face and torque about its rotor axis (through the
/// free face origin) from all dipole pairs.
pub fn magnetic_interaction(
    pose_fixed: &Isometry3<f64>,
    pose_free: &Isometry3<f64>,
    layout: &ArcMagnetLayout,
) -> Result<(Vector3<f64>, f64)> {
    let i = interact(pose_fixed, pose_free, layout)?;
    Ok((i.force, i.axial_torque))
}

struct Interaction {
    force: Vector3<f64>,
    axial_torque: f64,
    /// Potential energy of the free dipoles in the fixed field, J.
    energy: f64,
}

fn interact(
    pose_fixed: &Isometry3<f64>,
    pose_free: &Isometry3<f64>,
    layout: &ArcMagnetLayout,
) -> Result<Interaction> {
    let fixed: Vec<_> = layout
        .dipoles()
        .map(|(p, m)| (pose_fixed * p, pose_fixed.rotation * m))
        .collect();
    let pivot = pose_free.translation.vector;
    let axis = pose_free.rotation * Vector3::from(layout.rotor_axis);
    let mut force = Vector3::zeros();
    let mut torque = Vector3::zeros();
    let mut energy = 0.0;
    for (p, m) in layout.dipoles() {
        let p2 = pose_free * p;
        let m2 = pose_free.rotation * m;
        if m2 == Vector3::zeros() {
            continue;
        }
        for (p1, m1) in &fixed {
            if *m1 == Vector3::zeros() {
                continue;
            }
            let r = p2 - p1;
            let d = r.norm();
            if d < 1e-9 {
                return Err(EpmError::SingularSeparation(d));
            }
            let (f, b) = dipole_pair(m1, &m2, &r);
            force += f;
            torque += (p2.coords - pivot).cross(&f) + m2.cross(&b);
            energy -= m2.dot(&b);
        }
    }
    Ok(Interaction { force, axial_torque: torque.dot(&axis), energy })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DockingScenario {
    /// m
    pub x_offset: f64,
    /// m
    pub y_offset: f64,
    /// deg
    pub tilt_alpha: f64,
    /// m/s; the quasi-static model does not depend on it.
    pub approach_speed: f64,
    /// m
    pub start_height: f64,
}

impl DockingScenario {
    pub fn at(x_offset: f64, y_offset: f64, tilt_alpha: f64) -> Self {
        Self {
            x_offset,
            y_offset,
            tilt_alpha,
            approach_speed: 3.0e-3,
            start_height: 30.0e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure((0.0..90.0).contains(&self.tilt_alpha), || {
            format!("tilt {} deg outside [0, 90)", self.tilt_alpha)
        })?;
        ensure(self.start_height > 0.0, || "start height must be > 0".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DockingParams {
    /// Rotational damping of the rotor relaxation, N·m/rad.
    pub rotor_inertia_proxy: f64,
    /// N·m
    pub bearing_friction_torque: f64,
    /// N; resists the pull on a tilted platform, scaled by sin(alpha).
    pub gravity_load: f64,
    /// Lateral stiffness of the carrier holding the free connector, N/m.
    pub spring_restoring: f64,
    /// Closest face-to-face distance at which capture is decided, m.
    pub capture_threshold: f64,
    /// deg
    pub alignment_tolerance: f64,
    /// Largest face-centre offset that still counts as mated, m.
    pub lateral_tolerance: f64,
    /// Rotor angle of the free connector before the descent, deg.
    pub initial_misalignment: f64,
    /// m
    pub descent_step: f64,
}

impl Default for DockingParams {
    fn default() -> Self {
        Self {
            rotor_inertia_proxy: 0.05,
            bearing_friction_torque: 2.0e-5,
            gravity_load: 0.53,
            spring_restoring: 7.5,
            capture_threshold: 2.0e-3,
            alignment_tolerance: 5.0,
            lateral_tolerance: 3.0e-3,
            initial_misalignment: 0.0,
            descent_step: 1.0e-3,
        }
    }
}

impl DockingParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.rotor_inertia_proxy,
            self.bearing_friction_torque,
            self.gravity_load,
            self.spring_restoring,
            self.capture_threshold,
            self.alignment_tolerance,
            self.lateral_tolerance,
            self.initial_misalignment,
        ];
        ensure(all.iter().all(|v| *v >= 0.0), || "docking parameters must be nonnegative".into())?;
        ensure(self.rotor_inertia_proxy > 0.0, || "rotor damping must be > 0".into())?;
        ensure(self.capture_threshold > 0.0, || "capture threshold must be > 0".into())?;
        ensure(self.descent_step > 0.0, || "descent step must be > 0".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DockingResult {
    Success,
    Fail,
}

/// Everything the capture decision looks at, so that calibration can
/// re-decide outcomes for new thresholds without re-simulating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DockingOutcome {
    pub result: DockingResult,
    /// Magnetic pull towards the mating position at capture, N.
    pub attraction: f64,
    /// Horizontal distance between the face centres at capture, m.
    pub lateral_offset: f64,
    /// Lateral give of the carrier from its commanded position, m.
    pub stretch: f64,
    /// Rotor misalignment after the last relaxation, deg.
    pub misalignment: f64,
    /// Axial torque at the final rotor angle, N·m.
    pub residual_torque: f64,
    /// Largest |axial torque| left after relaxing at any height, N·m.
    pub max_residual_torque: f64,
    pub steps: usize,
}

const MAX_RELAX_ITERATIONS: usize = 1000;
const MAX_RELAX_STEP: f64 = 0.2;
/// N/m; converts net lateral force into a trial displacement.
const LATERAL_DAMPING: f64 = 2000.0;
const MAX_LATERAL_STEP: f64 = 1.0e-3;
const MAX_GAIN: f64 = 1.0e3;
/// N; net lateral force at which the carrier counts as settled.
const LATERAL_FORCE_TOLERANCE: f64 = 1.0e-5;
const MAX_HALVINGS: usize = 60;
const MAX_DESCENT_STEPS: usize = 10_000;

fn wrap_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(TAU) - PI;
    if t == -PI { PI } else { t }
}

/// Pose of the fixed face on the tilted platform.
pub fn fixed_pose(tilt_deg: f64) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::identity(),
        UnitQuaternion::from_axis_angle(&Vector3::y_axis(), tilt_deg.to_radians()),
    )
}

/// Pose of the free face: flipped about x to face down, rotor turned by
/// `rotor` radians about its own axis, origin at (x, y, z). A layout whose
/// arcs lie along local y mates with its flipped copy at rotor angle 0.
pub fn free_pose(x: f64, y: f64, z: f64, rotor: f64) -> Isometry3<f64> {
    let flip = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI);
    let spin = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), rotor);
    Isometry3::from_parts(Translation3::new(x, y, z), flip * spin)
}

/// Relaxed state of the free connector at one height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxedState {
    /// Carrier-compliant lateral position, m.
    pub x: f64,
    pub y: f64,
    /// Rotor angle, rad.
    pub theta: f64,
    pub force: Vector3<f64>,
    pub axial_torque: f64,
}

/// Clearance between the lowest rim point of the horizontal free face and
/// the tilted fixed face plane, whose normal is (sin a, 0, cos a).
fn clearance(x: f64, z: f64, tilt: f64, radius: f64) -> f64 {
    x * tilt.sin() + z * tilt.cos() - radius * tilt.sin()
}

/// Relaxes the free connector at height `z`: the rotor turns about its
/// axis and the carrier gives way laterally against `spring_restoring`,
/// anchored at `anchor`. Damped gradient descent on magnetic plus spring
/// energy; a trial step that raises the energy is halved. The rotor stays
/// put while static friction holds it.
#[allow(clippy::too_many_arguments)]
pub fn relax(
    fixed: &Isometry3<f64>,
    anchor: (f64, f64),
    z: f64,
    start: (f64, f64, f64),
    tilt: f64,
    params: &DockingParams,
    layout: &ArcMagnetLayout,
) -> Result<RelaxedState> {
    let k = params.spring_restoring;
    // Tilt share of the gravity load, pulling down the slope of the fixed face.
    let downhill = params.gravity_load * tilt.sin();
    let floor = 0.5 * params.capture_threshold;
    let energy = |x: f64, y: f64, i: &Interaction| {
        let (dx, dy) = (x - anchor.0, y - anchor.1);
        i.energy + 0.5 * k * (dx * dx + dy * dy) - downhill * x
    };
    let (mut x, mut y, mut theta) = start;
    let mut here = interact(fixed, &free_pose(x, y, z, theta), layout)?;
    let mut e = energy(x, y, &here);
    // Rotor and carrier are relaxed alternately, each by a backtracking line
    // search whose gain grows after a success and shrinks on rejection.
    let (mut rotor_gain, mut lateral_gain) = (1.0_f64, 1.0_f64);
    for _ in 0..MAX_RELAX_ITERATIONS {
        let turn = here.axial_torque.abs() >= params.bearing_friction_torque;
        let mut rotor_moved = false;
        if turn {
            let mut dt = (rotor_gain * here.axial_torque / params.rotor_inertia_proxy)
                .clamp(-MAX_RELAX_STEP, MAX_RELAX_STEP);
            for _ in 0..MAX_HALVINGS {
                let tt = wrap_angle(theta + dt);
                let trial = interact(fixed, &free_pose(x, y, z, tt), layout)?;
                let te = energy(x, y, &trial);
                if te < e {
                    (theta, here, e) = (tt, trial, te);
                    rotor_moved = true;
                    break;
                }
                rotor_gain *= 0.5;
                dt *= 0.5;
            }
            rotor_gain = (rotor_gain * 2.0).min(MAX_GAIN);
        }

        let fx = here.force.x - k * (x - anchor.0) + downhill;
        let fy = here.force.y - k * (y - anchor.1);
        let mut lateral_moved = false;
        if fx.hypot(fy) >= LATERAL_FORCE_TOLERANCE {
            let (mut dx, mut dy) = (lateral_gain * fx / LATERAL_DAMPING, lateral_gain * fy / LATERAL_DAMPING);
            let shift = dx.hypot(dy);
            if shift > MAX_LATERAL_STEP {
                dx *= MAX_LATERAL_STEP / shift;
                dy *= MAX_LATERAL_STEP / shift;
            }
            for _ in 0..MAX_HALVINGS {
                let (tx, ty) = (x + dx, y + dy);
                if clearance(tx, z, tilt, layout.face_radius) >= floor {
                    let trial = interact(fixed, &free_pose(tx, ty, z, theta), layout)?;
                    let te = energy(tx, ty, &trial);
                    if te < e {
                        (x, y, here, e) = (tx, ty, trial, te);
                        lateral_moved = true;
                        break;
                    }
                }
                lateral_gain *= 0.5;
                dx *= 0.5;
                dy *= 0.5;
            }
            lateral_gain = (lateral_gain * 2.0).min(MAX_GAIN);
        }
        if !rotor_moved && !lateral_moved {
            break;
        }
    }
    Ok(RelaxedState { x, y, theta, force: here.force, axial_torque: here.axial_torque })
}

/// Height of the free face origin at lateral position `x` where the
/// clearance equals `gap`.
fn height_at_clearance(x: f64, tilt: f64, radius: f64, gap: f64) -> f64 {
    (gap + radius * tilt.sin() - x * tilt.sin()) / tilt.cos()
}

pub fn simulate_docking_detailed(
    scenario: &DockingScenario,
    params: &DockingParams,
    layout: &ArcMagnetLayout,
) -> Result<DockingOutcome> {
    scenario.validate()?;
    params.validate()?;
    let tilt = scenario.tilt_alpha.to_radians();
    let fixed = fixed_pose(scenario.tilt_alpha);
    let anchor = (scenario.x_offset, scenario.y_offset);
    let radius = layout.face_radius;
    let mut z = scenario
        .start_height
        .max(height_at_clearance(anchor.0, tilt, radius, params.capture_threshold));
    let mut state = (anchor.0, anchor.1, params.initial_misalignment.to_radians());
    let mut steps = 0;
    let mut max_residual_torque = 0.0_f64;
    let relaxed = loop {
        let r = relax(&fixed, anchor, z, state, tilt, params, layout)?;
        state = (r.x, r.y, r.theta);
        max_residual_torque = max_residual_torque.max(r.axial_torque.abs());
        steps += 1;
        let capture_z = height_at_clearance(r.x, tilt, radius, params.capture_threshold);
        if z <= capture_z + 1e-12 || steps > MAX_DESCENT_STEPS {
            break r;
        }
        z = (z - params.descent_step).max(capture_z);
    };

    let normal = fixed * Vector3::z();
    let mut outcome = DockingOutcome {
        result: DockingResult::Fail,
        attraction: -relaxed.force.dot(&normal),
        stretch: (relaxed.x - anchor.0).hypot(relaxed.y - anchor.1),
        lateral_offset: relaxed.x.hypot(relaxed.y),
        misalignment: wrap_angle(relaxed.theta).abs().to_degrees(),
        residual_torque: relaxed.axial_torque,
        max_residual_torque,
        steps,
    };
    outcome.result = decide(&outcome, scenario.tilt_alpha, params);
    Ok(outcome)
}

/// Capture rule applied to a simulated descent: the axial pull must beat
/// the tilt share of the gravity load plus the stretched carrier spring,
/// and the faces must have come into register.
pub fn decide(outcome: &DockingOutcome, tilt_deg: f64, params: &DockingParams) -> DockingResult {
    let opposition =
        params.gravity_load * tilt_deg.to_radians().sin() + params.spring_restoring * outcome.stretch;
    if outcome.attraction > opposition
        && outcome.misalignment < params.alignment_tolerance
        && outcome.lateral_offset < params.lateral_tolerance
    {
        DockingResult::Success
    } else {
        DockingResult::Fail
    }
}

pub fn simulate_docking(
    scenario: &DockingScenario,
    params: &DockingParams,
    layout: &ArcMagnetLayout,
) -> DockingResult {
    // Relaxation keeps the faces at least half the capture distance apart,
    // so the dipole sums never hit a singular pair.
    match simulate_docking_detailed(scenario, params, layout) {
        Ok(o) => o.result,
        Err(_) => DockingResult::Fail,
    }
}

pub const GRID_SIZE: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessMap {
    /// Row-major: `grid[iy][ix]` at (ix·spacing, iy·spacing).
    pub grid: Vec<Vec<DockingResult>>,
    /// m
    pub spacing: f64,
    /// deg
    pub tilt_alpha: f64,
}

impl SuccessMap {
    pub fn success_count(&self) -> usize {
        self.grid
            .iter()
            .flatten()
            .filter(|r| **r == DockingResult::Success)
            .count()
    }

    pub fn cells(&self) -> usize {
        self.grid.iter().map(Vec::len).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.grid {
            let cells: Vec<&str> = row
                .iter()
                .map(|r| match r {
                    DockingResult::Success => "S",
                    DockingResult::Fail => "F",
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn success_rate(map: &SuccessMap) -> f64 {
    let cells = map.cells();
    if cells == 0 {
        return 0.0;
    }
    map.success_count() as f64 / cells as f64
}

/// Detailed outcomes on the one-sided 7×7 offset grid, row-major.
pub fn sweep_outcomes(
    spacing: f64,
    tilt: f64,
    params: &DockingParams,
    layout: &ArcMagnetLayout,
) -> Result<Vec<DockingOutcome>> {
    ensure(spacing > 0.0, || "grid spacing must be > 0".into())?;
    (0..GRID_SIZE * GRID_SIZE)
        .into_par_iter()
        .map(|k| {
            let (iy, ix) = (k / GRID_SIZE, k % GRID_SIZE);
            let s = DockingScenario::at(ix as f64 * spacing, iy as f64 * spacing, tilt);
            simulate_docking_detailed(&s, params, layout)
        })
        .collect()
}

fn outcomes_to_map(outcomes: &[DockingOutcome], spacing: f64, tilt: f64) -> SuccessMap {
    SuccessMap {
        grid: outcomes
            .chunks(GRID_SIZE)
            .map(|row| row.iter().map(|o| o.result).collect())
            .collect(),
        spacing,
        tilt_alpha: tilt,
    }
}

pub fn sweep_grid(
    spacing: f64,
    tilt: f64,
    params: &DockingParams,
    layout: &ArcMagnetLayout,
) -> Result<SuccessMap> {
    let outcomes = sweep_outcomes(spacing, tilt, params, layout)?;
    Ok(outcomes_to_map(&outcomes, spacing, tilt))
}

/// Target success count for one tilt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTarget {
    pub tilt_deg: f64,
    pub success_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DockingCalibration {
    pub params: DockingParams,
    pub geometry: ArcGeometry,
    pub counts: Vec<usize>,
    /// Sum of absolute count errors over all targets.
    pub total_error: usize,
}

/// Search ranges for [`calibrate_docking`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DockingSearch {
    pub arc_moments: Vec<f64>,
    pub spring_restorings: Vec<f64>,
    pub gravity_loads: Vec<f64>,
    pub alignment_tolerances: Vec<f64>,
}

impl Default for DockingSearch {
    fn default() -> Self {
        let lin = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        };
        Self {
            arc_moments: lin(0.5, 0.6, 3),
            spring_restorings: lin(7.0, 8.0, 3),
            gravity_loads: lin(0.45, 0.6, 16),
            alignment_tolerances: vec![5.0],
        }
    }
}

fn count_errors(targets: &[RateTarget], counts: &[usize]) -> usize {
    targets.iter().zip(counts).map(|(t, c)| t.success_count.abs_diff(*c)).sum()
}

/// Grid search over arc moment, carrier stiffness, gravity load and
/// alignment tolerance for the success counts in `targets`. Stiffness and
/// gravity shape the descent, so each combination is simulated; untilted
/// sweeps do not depend on gravity and are simulated once per stiffness.
/// The alignment tolerance only enters the capture rule and is re-decided
/// on stored outcomes. Ties break towards the earliest candidate, so the
/// result is deterministic.
pub fn calibrate_docking(
    targets: &[RateTarget],
    spacing: f64,
    base: &DockingParams,
    geometry: &ArcGeometry,
    search: &DockingSearch,
) -> Result<DockingCalibration> {
    ensure(!targets.is_empty(), || "no docking targets".into())?;
    ensure(
        !(search.arc_moments.is_empty()
            || search.spring_restorings.is_empty()
            || search.gravity_loads.is_empty()
            || search.alignment_tolerances.is_empty()),
        || "empty docking search range".into(),
    )?;
    let untilted = |t: &RateTarget| t.tilt_deg == 0.0;
    let mut best: Option<DockingCalibration> = None;
    for &moment in &search.arc_moments {
        let geom = ArcGeometry { arc_moment: moment, ..*geometry };
        let layout = ArcMagnetLayout::symmetric(&geom)?;
        for &spring in &search.spring_restorings {
            let params = DockingParams { spring_restoring: spring, ..*base };
            let flat: Vec<Option<Vec<DockingOutcome>>> = targets
                .iter()
                .map(|t| {
                    untilted(t)
                        .then(|| sweep_outcomes(spacing, t.tilt_deg, &params, &layout))
                        .transpose()
                })
                .collect::<Result<_>>()?;
            for &gravity in &search.gravity_loads {
                let params = DockingParams { gravity_load: gravity, ..params };
                let mut outcomes = Vec::with_capacity(targets.len());
                for (t, cached) in targets.iter().zip(&flat) {
                    outcomes.push(match cached {
                        Some(os) => os.clone(),
                        None => sweep_outcomes(spacing, t.tilt_deg, &params, &layout)?,
                    });
                }
                for &tol in &search.alignment_tolerances {
                    let params = DockingParams { alignment_tolerance: tol, ..params };
                    let counts: Vec<usize> = targets
                        .iter()
                        .zip(&outcomes)
                        .map(|(t, os)| {
                            os.iter()
                                .filter(|o| decide(o, t.tilt_deg, &params) == DockingResult::Success)
                                .count()
                        })
                        .collect();
                    let total_error = count_errors(targets, &counts);
                    if best.as_ref().is_none_or(|b| total_error < b.total_error) {
                        best = Some(DockingCalibration { params, geometry: geom, counts, total_error });
                    }
                }
                if best.as_ref().is_some_and(|b| b.total_error == 0) {
                    return Ok(best.expect("checked above"));
                }
                if targets.iter().all(untilted) {
                    break;
                }
            }
        }
    }
    Ok(best.expect("search ranges are non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ArcMagnetLayout {
        ArcMagnetLayout::symmetric(&ArcGeometry::default()).unwrap()
    }

    fn arcs_only() -> ArcMagnetLayout {
        let mut l = layout();
        l.epm_moment = [0.0; 3];
        l
    }

    #[test]
    fn aligned_faces_attract_without_axial_torque() {
        let l = layout();
        let (f, t) = magnetic_interaction(&fixed_pose(0.0), &free_pose(0.0, 0.0, 3e-3, 0.0), &l).unwrap();
        assert!(f.z < 0.0, "{f:?}");
        assert!(f.x.abs() < 1e-9 * f.z.abs() && f.y.abs() < 1e-9 * f.z.abs());
        assert!(t.abs() < 1e-12, "{t}");
    }

    #[test]
    fn like_poles_repel_and_torque_restores() {
        let l = arcs_only();
        let (f, _) = magnetic_interaction(&fixed_pose(0.0), &free_pose(0.0, 0.0, 3e-3, PI), &l).unwrap();
        assert!(f.z > 0.0, "{f:?}");
        // Just short of 180° the torque drives the rotor back towards 0.
        let (_, t) =
            magnetic_interaction(&fixed_pose(0.0), &free_pose(0.0, 0.0, 3e-3, 170f64.to_radians()), &l)
                .unwrap();
        assert!(t < 0.0, "{t}");
        let (_, t) =
            magnetic_interaction(&fixed_pose(0.0), &free_pose(0.0, 0.0, 3e-3, -170f64.to_radians()), &l)
                .unwrap();
        assert!(t > 0.0, "{t}");
    }

    #[test]
    fn doubling_moments_quadruples_force() {
        let l = layout();
        let mut l2 = l.clone();
        for m in &mut l2.dipole_moments {
            *m = m.map(|v| 2.0 * v);
        }
        l2.epm_moment = l2.epm_moment.map(|v| 2.0 * v);
        let pose = free_pose(4e-3, -2e-3, 5e-3, 0.3);
        let (f1, t1) = magnetic_interaction(&fixed_pose(10.0), &pose, &l).unwrap();
        let (f2, t2) = magnetic_interaction(&fixed_pose(10.0), &pose, &l2).unwrap();
        assert!((f2 - 4.0 * f1).norm() < 1e-12 * f1.norm());
        assert!((t2 - 4.0 * t1).abs() < 1e-12 * t1.abs());
    }

    #[test]
    fn coincident_dipoles_are_singular() {
        let l = layout();
        // Flipped face at z = 0 puts the EPM dipoles on top of each other.
        let err = magnetic_interaction(&fixed_pose(0.0), &free_pose(0.0, 0.0, 0.0, 0.0), &l).unwrap_err();
        assert!(matches!(err, EpmError::SingularSeparation(_)));
    }

    #[test]
    fn dipole_force_matches_energy_gradient() {
        // F = ∇(m2·B1) by central differences.
        let m1 = Vector3::new(0.1, -0.2, 0.3);
        let m2 = Vector3::new(-0.05, 0.15, 0.2);
        let r = Vector3::new(0.004, 0.002, 0.007);
        let energy = |r: &Vector3<f64>| m2.dot(&dipole_pair(&m1, &m2, r).1);
        let (f, _) = dipole_pair(&m1, &m2, &r);
        let h = 1e-8;
        for i in 0..3 {
            let mut e = Vector3::zeros();
            e[i] = h;
            let g = (energy(&(r + e)) - energy(&(r - e))) / (2.0 * h);
            assert!((g - f[i]).abs() < 1e-6 * f.norm(), "axis {i}: {g} vs {}", f[i]);
        }
    }

    #[test]
    fn layout_rejects_single_dipole_arcs() {
        let geom = ArcGeometry { dipoles_per_arc: 1, ..Default::default() };
        assert!(ArcMagnetLayout::symmetric(&geom).is_err());
    }

    #[test]
    fn layout_rejects_same_pole_arcs() {
        let mut l = layout();
        for m in &mut l.dipole_moments {
            m[2] = m[2].abs();
        }
        assert!(l.validate().is_err());
    }

    #[test]
    fn dipole_count_convergence() {
        let n = ArcGeometry::default().dipoles_per_arc;
        let coarse = ArcMagnetLayout::symmetric(&ArcGeometry { dipoles_per_arc: n, ..Default::default() })
            .unwrap();
        let fine = ArcMagnetLayout::symmetric(&ArcGeometry { dipoles_per_arc: 2 * n, ..Default::default() })
            .unwrap();
        for (x, y, z) in [(0.0, 0.0, 3e-3), (5e-3, 5e-3, 3e-3), (15e-3, 0.0, 5e-3), (0.0, 10e-3, 6e-3)] {
            let pose = free_pose(x, y, z, 0.2);
            let (fc, _) = magnetic_interaction(&fixed_pose(0.0), &pose, &coarse).unwrap();
            let (ff, _) = magnetic_interaction(&fixed_pose(0.0), &pose, &fine).unwrap();
            assert!((fc - ff).norm() < 0.02 * ff.norm(), "{x},{y},{z}: {fc:?} vs {ff:?}");
        }
    }

    #[test]
    fn relaxed_rotor_is_held_by_friction() {
        let l = layout();
        let p = DockingParams::default();
        let fixed = fixed_pose(0.0);
        let r = relax(&fixed, (5e-3, 0.0), 6e-3, (5e-3, 0.0, 1.0), 0.0, &p, &l).unwrap();
        let (_, again) = magnetic_interaction(&fixed, &free_pose(r.x, r.y, 6e-3, r.theta), &l).unwrap();
        assert_eq!(r.axial_torque, again);
        assert!(again.abs() < p.bearing_friction_torque, "{again}");
    }

    #[test]
    fn carrier_settles_where_spring_balances_pull() {
        let l = layout();
        let p = DockingParams::default();
        let fixed = fixed_pose(0.0);
        let r = relax(&fixed, (12e-3, 0.0), 10e-3, (12e-3, 0.0, 0.0), 0.0, &p, &l).unwrap();
        let net = (r.force.x - p.spring_restoring * (r.x - 12e-3)).hypot(r.force.y - p.spring_restoring * r.y);
        assert!(net < 1e-4, "{net} at {r:?}");
    }

    #[test]
    fn origin_without_opposing_loads_succeeds() {
        let p = DockingParams { gravity_load: 0.0, spring_restoring: 0.0, ..Default::default() };
        let r = simulate_docking(&DockingScenario::at(0.0, 0.0, 0.0), &p, &layout());
        assert_eq!(r, DockingResult::Success);
    }

    #[test]
    fn success_rate_bounds() {
        let full = |r| SuccessMap { grid: vec![vec![r; GRID_SIZE]; GRID_SIZE], spacing: 5e-3, tilt_alpha: 0.0 };
        assert_eq!(success_rate(&full(DockingResult::Fail)), 0.0);
        assert_eq!(success_rate(&full(DockingResult::Success)), 1.0);
        let mut m = full(DockingResult::Fail);
        for k in 0..29 {
            m.grid[k / GRID_SIZE][k % GRID_SIZE] = DockingResult::Success;
        }
        assert!((success_rate(&m) - 0.5918).abs() < 1e-4);
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let l = layout();
        let p = DockingParams::default();
        assert!(simulate_docking_detailed(&DockingScenario::at(0.0, 0.0, 90.0), &p, &l).is_err());
        let s = DockingScenario { start_height: 0.0, ..DockingScenario::at(0.0, 0.0, 0.0) };
        assert!(simulate_docking_detailed(&s, &p, &l).is_err());
        assert!(sweep_grid(0.0, 0.0, &p, &l).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        for t in [-7.0, -PI, -1.0, 0.0, 1.0, PI, 7.0, 100.0] {
            let w = wrap_angle(t);
            assert!(w > -PI && w <= PI);
            assert!(((w - t) / TAU - ((w - t) / TAU).round()).abs() < 1e-9);
        }
    }
}
