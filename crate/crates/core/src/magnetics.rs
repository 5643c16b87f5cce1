//! Lumped magnetic circuit of the electro-permanent magnet.
//!
//! The circuit is a soft (AlNiCo) and a hard (NdFeB) segment closed through
//! two identical air gaps by steel end caps. Segment polarization is stored
//! relative to the circuit reference direction, which is also the direction
//! of a magnetizing coil drive. Magnets follow a rectangular hysteresis
//! idealization: a segment opposing the reference direction holds its
//! coercive field intensity, an aligned one holds none.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, EpmError, Result};

/// Permeability of free space, H/m.
pub const MU0: f64 = 4.0e-7 * PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialProps {
    pub name: String,
    /// A/m
    pub coercivity: f64,
    /// T
    pub remanence: f64,
    pub recoil_permeability: f64,
}

impl MaterialProps {
    pub fn new(name: &str, coercivity: f64, remanence: f64, recoil_permeability: f64) -> Result<Self> {
        let m = Self {
            name: name.to_string(),
            coercivity,
            remanence,
            recoil_permeability,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.coercivity > 0.0, || format!("{}: coercivity must be > 0", self.name))?;
        ensure(self.remanence > 0.0, || format!("{}: remanence must be > 0", self.name))?;
        ensure(self.recoil_permeability >= 1.0, || {
            format!("{}: recoil permeability must be >= 1", self.name)
        })
    }

    pub fn alnico5() -> Self {
        Self {
            name: "AlNiCo-5".into(),
            coercivity: 48.0e3,
            remanence: 1.26,
            recoil_permeability: 4.0,
        }
    }

    pub fn ndfeb_n40() -> Self {
        Self {
            name: "NdFeB-N40".into(),
            coercivity: 870.0e3,
            remanence: 1.27,
            recoil_permeability: 1.05,
        }
    }

    pub fn ndfeb_n35() -> Self {
        Self {
            name: "NdFeB-N35".into(),
            coercivity: 870.0e3,
            remanence: 1.19,
            recoil_permeability: 1.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    Aligned,
    Opposed,
}

impl Polarization {
    /// Sign factor of the MMF balance: +1 consumes MMF (demagnetizing),
    /// -1 contributes it (magnetizing).
    pub fn sign_factor(self) -> f64 {
        match self {
            Polarization::Aligned => -1.0,
            Polarization::Opposed => 1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarization::Aligned => Polarization::Opposed,
            Polarization::Opposed => Polarization::Aligned,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnetSegment {
    pub material: MaterialProps,
    /// m
    pub length: f64,
    /// m²
    pub cross_section: f64,
    pub polarization: Polarization,
}

impl MagnetSegment {
    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        ensure(self.length > 0.0, || "segment length must be > 0".into())?;
        ensure(self.cross_section > 0.0, || "segment cross-section must be > 0".into())
    }

    pub fn sign_factor(&self) -> f64 {
        self.polarization.sign_factor()
    }

    /// Field intensity held by the segment against a magnetizing drive:
    /// its coercivity while opposed, zero once aligned.
    pub fn operating_intensity(&self) -> f64 {
        match self.polarization {
            Polarization::Opposed => self.material.coercivity,
            Polarization::Aligned => 0.0,
        }
    }

    /// MMF the segment absorbs from a drive passing through it, A-turns.
    pub fn consumed_mmf(&self) -> f64 {
        self.operating_intensity() * self.length
    }

    /// Signed coercive MMF term `σ·H·L` of the balance equation.
    pub fn balance_term(&self) -> f64 {
        self.sign_factor() * self.material.coercivity * self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winding {
    AlnicoOnly,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoilSpec {
    pub turns: u32,
    /// m
    pub wire_diameter: f64,
    /// Ω
    pub resistance: f64,
    pub winding: Winding,
}

impl CoilSpec {
    pub fn validate(&self) -> Result<()> {
        if self.turns < 1 {
            return Err(EpmError::InvalidCoil("coil needs at least one turn".into()));
        }
        if !(self.resistance > 0.0) {
            return Err(EpmError::InvalidCoil(format!(
                "resistance must be > 0, got {}",
                self.resistance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirGapSpec {
    /// m
    pub thickness: f64,
    /// m²
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpmAssembly {
    pub alnico: MagnetSegment,
    pub ndfeb: MagnetSegment,
    pub coil: CoilSpec,
    pub gaps: [AirGapSpec; 2],
    /// Flux density cap at the pole faces, T.
    pub saturation_flux: f64,
}

/// End-cap pole face area of the connector EPM, m².
pub const END_CAP_AREA: f64 = 48.85e-6;

impl EpmAssembly {
    /// The connector EPM: 7 mm × Ø5 mm AlNiCo-5 rod and N35 disk, 120-turn
    /// single winding of 3.0 Ω, switched on.
    pub fn connector_default() -> Self {
        let rod_area = PI * 0.0025f64.powi(2);
        let alnico = MaterialProps::alnico5();
        let saturation_flux = alnico.remanence;
        Self {
            alnico: MagnetSegment {
                material: alnico,
                length: 7.0e-3,
                cross_section: rod_area,
                polarization: Polarization::Aligned,
            },
            ndfeb: MagnetSegment {
                material: MaterialProps::ndfeb_n35(),
                length: 7.0e-3,
                cross_section: rod_area,
                polarization: Polarization::Aligned,
            },
            coil: CoilSpec {
                turns: 120,
                wire_diameter: 0.15e-3,
                resistance: 3.0,
                winding: Winding::AlnicoOnly,
            },
            gaps: [AirGapSpec { thickness: 0.5e-3, area: END_CAP_AREA }; 2],
            saturation_flux,
        }
    }

    /// The winding-comparison prototype: 130 turns at ≈2.0 Ω, N40 disk,
    /// both segments opposing the drive.
    pub fn winding_prototype() -> Self {
        let mut a = Self::connector_default();
        a.ndfeb.material = MaterialProps::ndfeb_n40();
        a.coil = CoilSpec {
            turns: 130,
            wire_diameter: 0.20e-3,
            resistance: 2.0,
            winding: Winding::AlnicoOnly,
        };
        a.alnico.polarization = Polarization::Opposed;
        a.ndfeb.polarization = Polarization::Opposed;
        a
    }

    pub fn validate(&self) -> Result<()> {
        self.alnico.validate()?;
        self.ndfeb.validate()?;
        self.coil.validate()?;
        for gap in &self.gaps {
            ensure(gap.thickness >= 0.0, || "gap thickness must be >= 0".into())?;
            ensure(gap.area > 0.0, || "gap area must be > 0".into())?;
        }
        ensure(self.saturation_flux > 0.0, || "saturation flux must be > 0".into())
    }

    pub fn segments(&self) -> [&MagnetSegment; 2] {
        [&self.alnico, &self.ndfeb]
    }

    /// Whether the soft magnet reinforces the hard one (connector on).
    pub fn is_on(&self) -> bool {
        self.alnico.polarization == Polarization::Aligned
    }

    /// Net MMF the magnets drive around the circuit with the coil idle.
    pub fn remanent_mmf(&self) -> f64 {
        -self.segments().iter().map(|s| s.balance_term()).sum::<f64>()
    }
}

pub fn coil_current(voltage: f64, coil: &CoilSpec) -> Result<f64> {
    coil.validate()?;
    ensure(voltage >= 0.0, || format!("voltage must be >= 0, got {voltage}"))?;
    Ok(voltage / coil.resistance)
}

/// MMF left for the air gaps once the segments inside the winding have
/// taken their share. May be negative when the drive cannot switch.
pub fn effective_mmf(assembly: &EpmAssembly, drive: f64, winding: Winding) -> f64 {
    let mut f = drive - assembly.alnico.consumed_mmf();
    if winding == Winding::Both {
        f -= assembly.ndfeb.consumed_mmf();
    }
    f
}

/// Gap field intensity from the MMF balance over an arbitrary segment set.
pub fn mmf_balance_segments<'a>(
    drive: f64,
    segments: impl IntoIterator<Item = &'a MagnetSegment>,
    gap_thickness: f64,
) -> Result<f64> {
    ensure(gap_thickness >= 0.0, || "gap thickness must be >= 0".into())?;
    let net = drive - segments.into_iter().map(|s| s.balance_term()).sum::<f64>();
    if gap_thickness == 0.0 {
        if net == 0.0 {
            return Ok(0.0);
        }
        return Err(EpmError::SingularGap { net_mmf: net });
    }
    Ok(net / (2.0 * gap_thickness))
}

/// Gap field intensity `H_g` (A/m) for coil drive `drive` (A-turns).
pub fn mmf_balance(assembly: &EpmAssembly, drive: f64) -> Result<f64> {
    let [g0, g1] = assembly.gaps;
    ensure(g0.thickness == g1.thickness, || {
        format!(
            "asymmetric gaps ({} m vs {} m) are outside the lumped model",
            g0.thickness, g1.thickness
        )
    })?;
    mmf_balance_segments(drive, assembly.segments(), g0.thickness)
}

/// Gap flux density, clamped in magnitude at `saturation`.
pub fn gap_flux_density(f_eff: f64, gap: &AirGapSpec, saturation: f64) -> Result<f64> {
    if !(gap.thickness > 0.0) {
        return Err(EpmError::SingularGap { net_mmf: f_eff });
    }
    let b = MU0 * f_eff / (2.0 * gap.thickness);
    Ok(b.clamp(-saturation, saturation))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulsePolarity {
    Magnetize,
    Demagnetize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// V
    pub voltage: f64,
    /// A
    pub current: f64,
    /// s
    pub duration: f64,
    pub polarity: PulsePolarity,
}

impl PulseSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.duration >= 0.0, || "pulse duration must be >= 0".into())?;
        ensure(self.voltage >= 0.0 && self.current >= 0.0, || {
            "pulse voltage and current must be >= 0".into()
        })
    }
}

/// Solenoid field of the coil over the wound AlNiCo length, A/m.
pub fn coil_field(assembly: &EpmAssembly, current: f64) -> f64 {
    f64::from(assembly.coil.turns) * current / assembly.alnico.length
}

/// Returns the assembly after `pulse`. Only the AlNiCo segment can switch;
/// the NdFeB coercivity is beyond any modeled drive.
pub fn apply_pulse(assembly: &EpmAssembly, pulse: &PulseSpec) -> EpmAssembly {
    let mut next = assembly.clone();
    if coil_field(assembly, pulse.current) > assembly.alnico.material.coercivity {
        next.alnico.polarization = match pulse.polarity {
            PulsePolarity::Magnetize => Polarization::Aligned,
            PulsePolarity::Demagnetize => Polarization::Opposed,
        };
    }
    next
}

pub fn pulse_energy(pulse: &PulseSpec) -> f64 {
    pulse.voltage * pulse.current * pulse.duration
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindingPoint {
    pub voltage: f64,
    pub b_alnico_only: f64,
    pub b_both: f64,
}

/// Gap flux density against drive voltage for both winding layouts at
/// matched NI. At zero voltage no current flows and both layouts sit at the
/// remanent-state flux.
pub fn compare_windings(assembly: &EpmAssembly, voltages: &[f64]) -> Result<Vec<WindingPoint>> {
    let gap = &assembly.gaps[0];
    let sat = assembly.saturation_flux;
    voltages
        .iter()
        .map(|&v| {
            let ni = f64::from(assembly.coil.turns) * coil_current(v, &assembly.coil)?;
            if ni == 0.0 {
                let b = gap_flux_density(assembly.remanent_mmf(), gap, sat)?;
                return Ok(WindingPoint { voltage: v, b_alnico_only: b, b_both: b });
            }
            Ok(WindingPoint {
                voltage: v,
                b_alnico_only: gap_flux_density(
                    effective_mmf(assembly, ni, Winding::AlnicoOnly),
                    gap,
                    sat,
                )?,
                b_both: gap_flux_density(effective_mmf(assembly, ni, Winding::Both), gap, sat)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment(coercivity: f64, length: f64, polarization: Polarization) -> MagnetSegment {
        MagnetSegment {
            material: MaterialProps::new("test", coercivity, 1.0, 1.0).unwrap(),
            length,
            cross_section: 1e-5,
            polarization,
        }
    }

    /// Assembly with H_Al·L_Al = `al` and H_Nd·L_Nd = `nd` A-turns.
    fn assembly_with(al: f64, nd: f64, gap: f64) -> EpmAssembly {
        let mut a = EpmAssembly::connector_default();
        a.alnico = segment(al / 1e-3, 1e-3, Polarization::Opposed);
        a.ndfeb = segment(nd.max(1e-9) / 1e-3, 1e-3, Polarization::Opposed);
        if nd == 0.0 {
            a.ndfeb.polarization = Polarization::Aligned;
        }
        a.gaps = [AirGapSpec { thickness: gap, area: END_CAP_AREA }; 2];
        a
    }

    #[test]
    fn ohms_law_current() {
        let mut coil = EpmAssembly::connector_default().coil;
        coil.resistance = 2.0;
        assert!((coil_current(6.0, &coil).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(coil_current(0.0, &coil).unwrap(), 0.0);
        coil.resistance = 3.0;
        assert!((coil_current(30.0, &coil).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn coil_without_resistance_is_rejected() {
        let mut coil = EpmAssembly::connector_default().coil;
        coil.resistance = 0.0;
        assert!(matches!(coil_current(1.0, &coil), Err(EpmError::InvalidCoil(_))));
        coil.resistance = -1.0;
        assert!(matches!(coil_current(1.0, &coil), Err(EpmError::InvalidCoil(_))));
    }

    #[test]
    fn effective_mmf_examples() {
        let a = assembly_with(30.0, 50.0, 0.5e-3);
        assert!((effective_mmf(&a, 100.0, Winding::AlnicoOnly) - 70.0).abs() < 1e-9);
        assert!((effective_mmf(&a, 100.0, Winding::Both) - 20.0).abs() < 1e-9);
        let mut idle = a.clone();
        idle.alnico.polarization = Polarization::Aligned;
        idle.ndfeb.polarization = Polarization::Aligned;
        for w in [Winding::AlnicoOnly, Winding::Both] {
            assert_eq!(effective_mmf(&idle, 123.0, w), 123.0);
        }
    }

    #[test]
    fn balance_without_segments() {
        let h = mmf_balance_segments(100.0, [], 0.5e-3).unwrap();
        assert!((h - 1.0e5).abs() < 1e-6);
    }

    #[test]
    fn balance_with_consuming_segments_and_no_drive_is_negative() {
        let a = assembly_with(30.0, 50.0, 0.5e-3);
        assert!(mmf_balance(&a, 0.0).unwrap() < 0.0);
    }

    #[test]
    fn flipping_sign_factor_shifts_gap_field() {
        let a = assembly_with(30.0, 50.0, 0.5e-3);
        let g = a.gaps[0].thickness;
        let before = mmf_balance(&a, 100.0).unwrap();
        let mut b = a.clone();
        b.ndfeb.polarization = b.ndfeb.polarization.flipped();
        let after = mmf_balance(&b, 100.0).unwrap();
        let hl = a.ndfeb.material.coercivity * a.ndfeb.length;
        assert!((after - before - 2.0 * hl / (2.0 * g)).abs() < 1e-6);
    }

    #[test]
    fn zero_gap_is_singular() {
        let a = assembly_with(30.0, 50.0, 0.0);
        assert!(matches!(mmf_balance(&a, 100.0), Err(EpmError::SingularGap { .. })));
        let gap = AirGapSpec { thickness: 0.0, area: END_CAP_AREA };
        assert!(matches!(gap_flux_density(10.0, &gap, 1.0), Err(EpmError::SingularGap { .. })));
    }

    #[test]
    fn asymmetric_gaps_rejected() {
        let mut a = assembly_with(30.0, 50.0, 0.5e-3);
        a.gaps[1].thickness = 0.6e-3;
        assert!(matches!(mmf_balance(&a, 1.0), Err(EpmError::InvalidInput(_))));
    }

    #[test]
    fn gap_flux_density_examples() {
        let gap = AirGapSpec { thickness: 0.5e-3, area: END_CAP_AREA };
        let b = gap_flux_density(100.0, &gap, 10.0).unwrap();
        // μ0 · 1e5 A/m
        assert!((b - 0.125_663_706).abs() < 1e-8);
        assert_eq!(gap_flux_density(0.0, &gap, 10.0).unwrap(), 0.0);
        let b2 = gap_flux_density(200.0, &gap, 10.0).unwrap();
        assert!((b2 - 2.0 * b).abs() < 1e-12);
        assert_eq!(gap_flux_density(1e9, &gap, 1.26).unwrap(), 1.26);
    }

    #[test]
    fn pulse_switching() {
        let mut a = EpmAssembly::connector_default();
        a.alnico.polarization = Polarization::Opposed;
        // 60 kA/m over the 7 mm rod with 120 turns.
        let current = 60.0e3 * a.alnico.length / 120.0;
        assert!((coil_field(&a, current) - 60.0e3).abs() < 1e-6);
        let pulse = PulseSpec {
            voltage: 30.0,
            current,
            duration: 1e-3,
            polarity: PulsePolarity::Magnetize,
        };
        let on = apply_pulse(&a, &pulse);
        assert_eq!(on.alnico.polarization, Polarization::Aligned);
        assert_eq!(apply_pulse(&on, &pulse), on);
        assert_eq!(on.ndfeb, a.ndfeb);

        let weak = PulseSpec { current: 0.5 * current, ..pulse };
        assert_eq!(apply_pulse(&a, &weak), a);
        let weak_off = PulseSpec { polarity: PulsePolarity::Demagnetize, ..weak };
        assert_eq!(apply_pulse(&on, &weak_off), on);
    }

    #[test]
    fn stated_pulse_switches_connector() {
        let a = EpmAssembly::connector_default();
        let off = apply_pulse(
            &a,
            &PulseSpec { voltage: 30.0, current: 10.0, duration: 1e-3, polarity: PulsePolarity::Demagnetize },
        );
        assert!(!off.is_on());
    }

    #[test]
    fn pulse_energy_examples() {
        let p = PulseSpec { voltage: 30.0, current: 10.0, duration: 1e-3, polarity: PulsePolarity::Magnetize };
        assert!((pulse_energy(&p) - 0.3).abs() < 1e-15);
        assert_eq!(pulse_energy(&PulseSpec { duration: 0.0, ..p }), 0.0);
        let q = PulseSpec { voltage: 6.0, current: 3.0, ..p };
        assert!((pulse_energy(&q) - 0.018).abs() < 1e-15);
    }

    #[test]
    fn winding_curves() {
        let a = EpmAssembly::winding_prototype();
        let pts = compare_windings(&a, &[0.0, 5.0, 10.0, 30.0]).unwrap();
        assert_eq!(pts[0].b_alnico_only, pts[0].b_both);
        for p in &pts[1..] {
            assert!(p.b_alnico_only > p.b_both, "{p:?}");
        }
        assert!(compare_windings(&a, &[]).unwrap().is_empty());

        let mut no_nd = a.clone();
        no_nd.ndfeb.polarization = Polarization::Aligned;
        for p in compare_windings(&no_nd, &[1.0, 7.5, 20.0]).unwrap() {
            assert_eq!(p.b_alnico_only, p.b_both);
        }
    }
}
