//! The experiments behind each subcommand. Each run writes its artifacts
//! and a manifest into the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use epm_core::compliance::{
    fluidic_angular_tolerance, max_axial_extension, max_bend_angle, max_connection_distance,
    max_lateral_offset, CalibratedForce,
};
use epm_core::coupling::{parse_script, run_script, PinLayout, DEFAULT_MTU};
use epm_core::docking::{sweep_grid, success_rate, ArcMagnetLayout, SuccessMap};
use epm_core::fluidics::{build_network, solve_flow, ElementKind, TransferMode};
use epm_core::force::predict_force;
use epm_core::magnetics::{
    apply_pulse, compare_windings, pulse_energy, EpmAssembly, Polarization, PulsePolarity, PulseSpec,
};
use serde::Serialize;
use serde_json::json;

use crate::data;
use crate::manifest::{sha256_hex, OutputWriter};
use crate::params::ParamSet;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindingSettings {
    pub points: usize,
    pub max_voltage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForceGapSettings {
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseSettings {
    pub voltage: f64,
    pub current: f64,
    pub duration_ms: f64,
    pub polarity: PulsePolarity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DockSettings {
    pub alphas: Vec<f64>,
    pub spacing_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidSettings {
    pub modes: Vec<TransferMode>,
    pub inlets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolSettings {
    pub script: Option<PathBuf>,
    pub orientation: f64,
    pub mtu: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "experiment", content = "parameters", rename_all = "snake_case")]
pub enum Experiment {
    Winding(WindingSettings),
    ForceGap(ForceGapSettings),
    Pulse(PulseSettings),
    Dock(DockSettings),
    Fluid(FluidSettings),
    Flex,
    Protocol(ProtocolSettings),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Winding(_) => "winding",
            Self::ForceGap(_) => "force_gap",
            Self::Pulse(_) => "pulse",
            Self::Dock(_) => "dock",
            Self::Fluid(_) => "fluid",
            Self::Flex => "flex",
            Self::Protocol(_) => "protocol",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub experiment: Experiment,
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub seed: u64,
}

pub const DEFAULT_ALPHAS: [f64; 3] = [0.0, 10.0, 20.0];
pub const DEFAULT_INLETS: [f64; 6] = [80.0, 90.0, 100.0, 102.0, 140.0, 175.0];

pub const DEFAULT_SCRIPT: &str = "\
# two connectors meet, couple, exchange frames and part
0 a proximity_reached
0 b proximity_reached
100 a alignment_converged
100 b alignment_converged
200 a magnetize_pulse
200 b magnetize_pulse
300 a link_probe_ok
300 b link_probe_ok
400 a send_frame hello
450 b send_frame ack
500 a demagnetize_pulse
600 b send_frame late
";

/// Compact decimal for file names and result keys: 10 rather than 10.0.
pub fn num_label(v: f64) -> String {
    format!("{v}")
}

type Results = BTreeMap<String, f64>;

/// Runs one experiment and returns its manifest path.
pub fn run_experiment(config: &ExperimentConfig, params: &ParamSet) -> Result<PathBuf, CliError> {
    let start = Instant::now();
    let mut out = OutputWriter::new(&config.output_dir)?;
    let mut hashed = serde_json::to_vec(&json!({ "config": config, "params": params }))
        .expect("config serializes");
    let results = match &config.experiment {
        Experiment::Winding(s) => winding(s, &mut out)?,
        Experiment::ForceGap(s) => {
            let (name, text) = data::source(s.data.as_deref(), data::FORCE_GAP)?;
            hashed.extend_from_slice(text.as_bytes());
            force_gap(&name, &text, params, &mut out)?
        }
        Experiment::Pulse(s) => pulse(s, &mut out)?,
        Experiment::Dock(s) => dock(s, params, &mut out)?,
        Experiment::Fluid(s) => fluid(s, params, &mut out)?,
        Experiment::Flex => flex(params, &mut out)?,
        Experiment::Protocol(s) => {
            let (_, text) = match &s.script {
                Some(p) => data::source(Some(p), "")?,
                None => ("<default>".into(), DEFAULT_SCRIPT.to_string()),
            };
            hashed.extend_from_slice(text.as_bytes());
            protocol(s, &text, &mut out)?
        }
    };
    let manifest = out.finish(
        config.experiment.name(),
        sha256_hex(&hashed),
        results,
        start.elapsed().as_secs_f64(),
    )?;
    Ok(manifest)
}

fn json_bytes(v: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s.into_bytes()
}

fn winding(s: &WindingSettings, out: &mut OutputWriter) -> Result<Results, CliError> {
    if s.points < 2 || !(s.max_voltage > 0.0) {
        return Err(CliError::Usage("winding needs at least 2 points and a positive max voltage".into()));
    }
    let voltages: Vec<f64> =
        (0..s.points).map(|i| s.max_voltage * i as f64 / (s.points - 1) as f64).collect();
    let curve = compare_windings(&EpmAssembly::winding_prototype(), &voltages)?;
    let mut csv = String::from("voltage_V,b_alnico_only_T,b_both_T\n");
    let mut violations = 0.0;
    for p in &curve {
        csv += &format!("{:.4},{:.6},{:.6}\n", p.voltage, p.b_alnico_only, p.b_both);
        if p.b_alnico_only < p.b_both {
            violations += 1.0;
        }
    }
    out.write("winding.csv", csv.as_bytes())?;
    Ok(Results::from([("winding_ordering_violations".into(), violations)]))
}

fn force_gap(name: &str, text: &str, params: &ParamSet, out: &mut OutputWriter) -> Result<Results, CliError> {
    let data = data::force_measurements(name, text)?;
    let assembly = EpmAssembly::connector_default();
    let calib = &params.force;
    let mut csv = String::from("gap_mm,force_N_model,force_N_measured\n");
    let mut sq = 0.0;
    for m in &data {
        let f = predict_force(&assembly, m.gap, calib)?;
        sq += (f - m.force).powi(2);
        csv += &format!("{:.3},{:.4},{:.4}\n", m.gap * 1e3, f, m.force);
    }
    let rmse = if data.is_empty() { 0.0 } else { (sq / data.len() as f64).sqrt() };
    let at = |mm: f64| predict_force(&assembly, mm * 1e-3, calib);
    let (f0, f01, f1) = (at(0.0)?, at(0.1)?, at(1.0)?);
    let dense: Vec<f64> = (0..=200).map(|i| at(i as f64 * 0.005)).collect::<Result<_, _>>()?;
    let decreasing = dense.windows(2).all(|w| w[1] < w[0]);
    out.write("force_gap.csv", csv.as_bytes())?;
    out.write(
        "force_gap.json",
        &json_bytes(&json!({
            "rmse_N": rmse,
            "rmse_fraction": rmse / 14.6,
            "force_0mm_N": f0,
            "force_0.1mm_N": f01,
            "force_1mm_N": f1,
            "strictly_decreasing": decreasing,
            "calibration": calib,
        })),
    )?;
    Ok(Results::from([
        ("force_0mm_N".into(), f0),
        ("force_0.1mm_N".into(), f01),
        ("force_1mm_N".into(), f1),
        ("force_rmse_N".into(), rmse),
    ]))
}

fn pulse(s: &PulseSettings, out: &mut OutputWriter) -> Result<Results, CliError> {
    let spec = PulseSpec { voltage: s.voltage, current: s.current, duration: s.duration_ms * 1e-3, polarity: s.polarity };
    spec.validate()?;
    let energy = pulse_energy(&spec);
    let mut start = EpmAssembly::connector_default();
    if s.polarity == PulsePolarity::Magnetize {
        start.alnico.polarization = Polarization::Opposed;
    }
    let switched = apply_pulse(&start, &spec).alnico.polarization != start.alnico.polarization;
    out.write("pulse.json", &json_bytes(&json!({ "energy_J": energy, "switched": switched })))?;
    Ok(Results::from([("pulse_energy_J".into(), energy)]))
}

/// Map as CSV: header of x offsets, one row per y offset, S or F per cell.
pub fn map_csv(map: &SuccessMap) -> String {
    let spacing_mm = map.spacing * 1e3;
    let mut csv = String::from("y_mm");
    for i in 0..map.grid.first().map_or(0, Vec::len) {
        csv += &format!(",{}", num_label(i as f64 * spacing_mm));
    }
    csv.push('\n');
    for (iy, line) in map.to_csv().lines().enumerate() {
        csv += &format!("{},{line}\n", num_label(iy as f64 * spacing_mm));
    }
    csv
}

fn dock(s: &DockSettings, params: &ParamSet, out: &mut OutputWriter) -> Result<Results, CliError> {
    if s.alphas.is_empty() {
        return Err(CliError::Usage("dock needs at least one --alpha".into()));
    }
    let layout = ArcMagnetLayout::symmetric(&params.dock.geometry)?;
    let mut results = Results::new();
    for &alpha in &s.alphas {
        let map = sweep_grid(s.spacing_mm * 1e-3, alpha, &params.dock.params, &layout)?;
        let label = num_label(alpha);
        let rate = success_rate(&map);
        out.write(&format!("dock_alpha{label}.csv"), map_csv(&map).as_bytes())?;
        out.write(
            &format!("dock_alpha{label}.json"),
            &json_bytes(&json!({
                "tilt_deg": alpha,
                "success_count": map.success_count(),
                "success_rate": rate,
            })),
        )?;
        results.insert(format!("dock_rate_alpha{label}"), rate);
        results.insert(format!("dock_count_alpha{label}"), map.success_count() as f64);
    }
    Ok(results)
}

fn fluid(s: &FluidSettings, params: &ParamSet, out: &mut OutputWriter) -> Result<Results, CliError> {
    let mut csv = String::from("mode,inlet_ml_min,outlet_ml_min,efficiency\n");
    let mut results = Results::new();
    let mut worst_residual: f64 = 0.0;
    for &mode in &s.modes {
        let net = build_network(mode, &params.fluid.geometry, &params.fluid.losses)?;
        for &inlet in &s.inlets {
            let flow = solve_flow(&net, inlet)?;
            let leaks: f64 = net
                .edges
                .iter()
                .filter(|e| e.element.kind == ElementKind::LeakShunt)
                .map(|e| flow.per_edge_flows[&e.element.id])
                .sum();
            if inlet > 0.0 {
                worst_residual = worst_residual.max((inlet - flow.outlet_rate - leaks).abs() / inlet);
            }
            csv += &format!("{},{},{:.4},{:.6}\n", mode.short_name(), num_label(inlet), flow.outlet_rate, flow.efficiency);
            results.insert(format!("fluid_{}_{}_efficiency", mode.short_name(), num_label(inlet)), flow.efficiency);
        }
    }
    out.write("fluid.csv", csv.as_bytes())?;
    results.insert("fluid_conservation_residual".into(), worst_residual);
    Ok(results)
}

fn flex(params: &ParamSet, out: &mut OutputWriter) -> Result<Results, CliError> {
    let f = CalibratedForce { assembly: EpmAssembly::connector_default(), calibration: params.force };
    let (spring, g) = (&params.flex.compression, &params.flex.geometry);
    let axial = max_axial_extension(spring, &f, g)?;
    let bend = max_bend_angle(spring, &f, g)?;
    let lateral = max_lateral_offset(spring, &f, g)?;
    let distance = max_connection_distance([(g, spring), (g, spring)], &f)?;
    let fluidic = fluidic_angular_tolerance(&params.flex.conical, &f, g)?;
    let report = json!({
        "axial_mm": axial * 1e3,
        "bend_deg": bend,
        "lateral_mm": lateral * 1e3,
        "distance_mm": distance * 1e3,
        "fluidic_bend_deg": fluidic,
    });
    out.write("flex.json", &json_bytes(&report))?;
    Ok(Results::from([
        ("flex_axial_mm".into(), axial * 1e3),
        ("flex_bend_deg".into(), bend),
        ("flex_lateral_mm".into(), lateral * 1e3),
        ("flex_distance_mm".into(), distance * 1e3),
        ("flex_fluidic_bend_deg".into(), fluidic),
    ]))
}

fn protocol(s: &ProtocolSettings, script: &str, out: &mut OutputWriter) -> Result<Results, CliError> {
    let entries = parse_script(script)?;
    let trace = run_script(&entries, &PinLayout::default(), s.orientation, s.mtu)?;
    let mut lines = String::new();
    let mut delivered = 0.0;
    for r in &trace {
        lines += &serde_json::to_string(r).expect("trace serializes");
        lines.push('\n');
        if r.delivery.as_ref().is_some_and(|d| d.delivered) {
            delivered += 1.0;
        }
    }
    out.write("protocol.jsonl", lines.as_bytes())?;
    Ok(Results::from([
        ("protocol_events".into(), trace.len() as f64),
        ("protocol_frames_delivered".into(), delivered),
    ]))
}

pub fn default_mtu() -> usize {
    DEFAULT_MTU
}

/// Directory a manifest's outputs are relative to.
pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}
