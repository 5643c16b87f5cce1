//! `epm`: runs the connector experiments, calibrations and the comparison
//! report. Exit codes: 0 success, 1 model or data error, 2 usage error.

mod config;
mod data;
mod experiments;
mod manifest;
mod params;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use epm_core::compliance::{calibrate_springs, CalibratedForce};
use epm_core::docking::{calibrate_docking, DockingSearch};
use epm_core::fluidics::{calibrate_losses, TransferMode};
use epm_core::force::calibrate_force_model_from;
use epm_core::magnetics::{EpmAssembly, PulsePolarity};
use epm_core::EpmError;

use config::{pick, ConfigFile};
use experiments::*;
use params::ParamSet;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Failure(#[from] anyhow::Error),
}

impl From<EpmError> for CliError {
    fn from(e: EpmError) -> Self {
        match e {
            EpmError::InvalidMode(m) => CliError::Usage(m),
            other => CliError::Failure(other.into()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "epm", version, about = "Experiments with electro-permanent-magnet connector models")]
struct Cli {
    /// TOML file with per-experiment sections; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Calibrated parameter file; written by `calibrate`, read by runs.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Gap flux density against drive voltage for both winding layouts.
    WindingCompare {
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        max_voltage: Option<f64>,
    },
    /// Model holding force against the measured force–gap points.
    ForceGap {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Energy of one switching pulse.
    Pulse {
        #[arg(long)]
        voltage: Option<f64>,
        #[arg(long)]
        current: Option<f64>,
        #[arg(long)]
        duration_ms: Option<f64>,
        #[arg(long, value_enum)]
        polarity: Option<PolarityArg>,
    },
    /// Self-alignment success maps, one per tilt.
    Dock {
        /// Platform tilt in degrees; repeatable [default: 0, 10, 20].
        #[arg(long)]
        alpha: Vec<f64>,
        #[arg(long)]
        spacing_mm: Option<f64>,
    },
    /// Fluid transfer efficiency per mode and inlet rate.
    Fluid {
        /// parallel, dual or loop; repeatable [default: all].
        #[arg(long)]
        mode: Vec<String>,
        /// Inlet rate in ml/min; repeatable.
        #[arg(long)]
        inlet: Vec<f64>,
    },
    /// Flexibility limits of a coupled pair.
    Flex,
    /// Runs an event script through two connectors and traces it.
    Protocol {
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        orientation: Option<f64>,
        #[arg(long)]
        mtu: Option<usize>,
    },
    /// Fits a model to its measurement file and stores the parameters.
    Calibrate {
        #[arg(value_enum)]
        target: CalibrationTarget,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Compares run manifests with the reported values.
    Report { manifests: Vec<PathBuf> },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolarityArg {
    Magnetize,
    Demagnetize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CalibrationTarget {
    Force,
    Dock,
    Fluid,
    Flex,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let out_dir = pick(cli.out.clone(), file.output_dir.clone(), PathBuf::from("out"));
    let params_path = cli.params.clone().or(file.params.clone());
    let seed = file.seed.unwrap_or(0);

    let experiment = match cli.command {
        Command::Calibrate { target, data } => {
            let path = params_path.unwrap_or_else(|| out_dir.join("params.toml"));
            calibrate(target, data.as_deref(), &path)?;
            return Ok(0);
        }
        Command::Report { manifests } => {
            let r = report::build_report(&manifests)?;
            if !manifests.is_empty() {
                std::fs::create_dir_all(&out_dir).map_err(anyhow::Error::from)?;
                std::fs::write(out_dir.join("report.csv"), &r.csv).map_err(anyhow::Error::from)?;
            }
            print!("{}", r.csv);
            return Ok(if r.absent > 0 { 1 } else { 0 });
        }
        Command::WindingCompare { points, max_voltage } => Experiment::Winding(WindingSettings {
            points: pick(points, file.winding.points, 20),
            max_voltage: pick(max_voltage, file.winding.max_voltage, 30.0),
        }),
        Command::ForceGap { data } => Experiment::ForceGap(ForceGapSettings { data: data.or(file.force_gap.data) }),
        Command::Pulse { voltage, current, duration_ms, polarity } => {
            let polarity = match (polarity, file.pulse.polarity.as_deref()) {
                (Some(PolarityArg::Magnetize), _) | (None, None | Some("magnetize")) => PulsePolarity::Magnetize,
                (Some(PolarityArg::Demagnetize), _) | (None, Some("demagnetize")) => PulsePolarity::Demagnetize,
                (None, Some(other)) => return Err(CliError::Usage(format!("unknown pulse polarity {other:?}"))),
            };
            Experiment::Pulse(PulseSettings {
                voltage: pick(voltage, file.pulse.voltage, 30.0),
                current: pick(current, file.pulse.current, 10.0),
                duration_ms: pick(duration_ms, file.pulse.duration_ms, 1.0),
                polarity,
            })
        }
        Command::Dock { alpha, spacing_mm } => Experiment::Dock(DockSettings {
            alphas: pick((!alpha.is_empty()).then_some(alpha), file.dock.alpha, DEFAULT_ALPHAS.to_vec()),
            spacing_mm: pick(spacing_mm, file.dock.spacing_mm, 5.0),
        }),
        Command::Fluid { mode, inlet } => {
            let names = pick((!mode.is_empty()).then_some(mode), file.fluid.modes, Vec::new());
            let modes = if names.is_empty() {
                TransferMode::ALL.to_vec()
            } else {
                names.iter().map(|m| m.parse::<TransferMode>()).collect::<Result<_, _>>()?
            };
            Experiment::Fluid(FluidSettings {
                modes,
                inlets: pick((!inlet.is_empty()).then_some(inlet), file.fluid.inlets, DEFAULT_INLETS.to_vec()),
            })
        }
        Command::Flex => Experiment::Flex,
        Command::Protocol { script, orientation, mtu } => Experiment::Protocol(ProtocolSettings {
            script: script.or(file.protocol.script),
            orientation: pick(orientation, file.protocol.orientation, 0.0),
            mtu: pick(mtu, file.protocol.mtu, default_mtu()),
        }),
    };

    let params = match &params_path {
        Some(p) => ParamSet::load(p)?,
        None => ParamSet::default(),
    };
    let config = ExperimentConfig { experiment, output_dir: out_dir, seed };
    let manifest = run_experiment(&config, &params)?;
    println!("{}", manifest.display());
    Ok(0)
}

fn calibrate(target: CalibrationTarget, data_path: Option<&Path>, params_path: &Path) -> Result<(), CliError> {
    let mut params = ParamSet::load_or_default(params_path)?;
    match target {
        CalibrationTarget::Force => {
            let (name, text) = data::source(data_path, data::FORCE_GAP)?;
            let data = data::force_measurements(&name, &text)?;
            let fit = calibrate_force_model_from(&data, &EpmAssembly::connector_default(), params.force)?;
            params.force = fit.calibration;
            println!(
                "force: leakage {:.6}, residual gap {:.6} mm, rmse {:.4} N ({:.2} % of 14.6 N), {} iterations",
                fit.calibration.leakage_fraction,
                fit.calibration.residual_gap * 1e3,
                fit.rmse,
                100.0 * fit.rmse / 14.6,
                fit.iterations
            );
        }
        CalibrationTarget::Dock => {
            let (name, text) = data::source(data_path, data::DOCKING_RATES)?;
            let targets = data::rate_targets(&name, &text)?;
            let cal = calibrate_docking(
                &targets,
                5e-3,
                &params.dock.params,
                &params.dock.geometry,
                &DockingSearch::default(),
            )?;
            params.dock.params = cal.params;
            params.dock.geometry = cal.geometry;
            for (t, c) in targets.iter().zip(&cal.counts) {
                println!("dock: tilt {} deg, {c} successes (target {})", t.tilt_deg, t.success_count);
            }
            println!("dock: total count error {}", cal.total_error);
        }
        CalibrationTarget::Fluid => {
            let (name, text) = data::source(data_path, data::FLUID_POINTS)?;
            let data = data::flow_measurements(&name, &text)?;
            let fit = calibrate_losses(&data, &params.fluid.geometry)?;
            params.fluid.losses = fit.losses;
            println!(
                "fluid: forward conductance {:.6e}, return conductance {:.6e} ml/(min·Pa), rmse {:.3} ml/min",
                fit.losses.forward_conductance, fit.losses.return_conductance, fit.rmse
            );
        }
        CalibrationTarget::Flex => {
            let (name, text) = data::source(data_path, data::FLEX_LIMITS)?;
            let targets = data::flex_targets(&name, &text)?;
            let force = CalibratedForce { assembly: EpmAssembly::connector_default(), calibration: params.force };
            let (mech, fluid) = calibrate_springs(
                &targets,
                &force,
                &params.flex.geometry,
                &params.flex.compression,
                &params.flex.conical,
            )?;
            params.flex.compression = mech;
            params.flex.conical = fluid;
            println!(
                "flex: axial {:.3} N/m, bending {:.6} N·m/rad, lateral {:.3} N/m, conical bending {:.6} N·m/rad",
                mech.axial_stiffness, mech.bending_stiffness, mech.lateral_stiffness, fluid.bending_stiffness
            );
        }
    }
    if let Some(dir) = params_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(anyhow::Error::from)?;
    }
    std::fs::write(params_path, params.to_toml()).map_err(anyhow::Error::from)?;
    println!("{}", params_path.display());
    Ok(())
}
