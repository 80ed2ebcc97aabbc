use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use extremctl_core::experiments::{delay_curve_csv, parse_etas, DelayCurveConfig};
use extremctl_core::impedance::{calibrate_chain, random_initial_gains, CalibrationConfig, CalibrationResult};
use extremctl_core::latency::io::{read_flows, read_frames, read_signal_csv, signal_csv};
use extremctl_core::latency::{analyze_frames, analyze_signals, flow_signal, FlowParams, RegionSpec, DEFAULT_MAX_LAG};
use extremctl_core::mapping::{calibrate, map_frame, CalibrationProfile, LinkSet, RobotModel, TimedLinkSet};
use extremctl_core::pipeline::{fit_line, latency_budget, run_pipeline, LatencyBudget, PipelineConfig, SweepReport};
use extremctl_core::plant::{run_episode, GainSchedule, JointGains, PlantModel, Signal};

use crate::{merge, read_json, read_text, CliError, Context, Format};

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
    value.as_ref().ok_or_else(|| CliError::usage(format!("missing --{flag}")))
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrateMapArgs {
    /// Human neutral pose, a link-set JSON object.
    #[arg(long)]
    pub neutral: Option<PathBuf>,
    /// Robot model JSON; the built-in small humanoid if omitted.
    #[arg(long)]
    pub robot: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn calibrate_map(ctx: &Context, a: &CalibrateMapArgs) -> Result<(), CliError> {
    let neutral: LinkSet = read_json(required(&a.neutral, "neutral")?)?;
    let robot = match &a.robot {
        Some(p) => read_json(p)?,
        None => RobotModel::small_humanoid(),
    };
    let profile = calibrate(&neutral, &robot)?;
    ctx.emit_json(a.out.as_deref(), &profile, a)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MapArgs {
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// JSON lines, one timestamped link set each. Blank lines are skipped.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn map(ctx: &Context, a: &MapArgs) -> Result<(), CliError> {
    let profile: CalibrationProfile = read_json(required(&a.profile, "profile")?)?;
    let frames = required(&a.frames, "frames")?;
    let mut out = String::new();
    for (i, line) in read_text(frames)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let human: TimedLinkSet = serde_json::from_str(line)
            .map_err(|e| CliError::op("parse", format!("{} line {}: {e}", frames.display(), i + 1)))?;
        let robot = TimedLinkSet {
            timestamp_ns: human.timestamp_ns,
            links: map_frame(&profile, &human.links),
        };
        out.push_str(&serde_json::to_string(&robot).map_err(|e| CliError::op("io", e))?);
        out.push('\n');
    }
    ctx.emit(a.out.as_deref(), out.as_bytes(), a)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrateGainsArgs {
    /// Plant model JSON; the built-in four-link arm if omitted.
    #[arg(long)]
    pub plant: Option<PathBuf>,
    /// rad/s
    #[arg(long)]
    pub omega_n: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Parallel environments per measurement.
    #[arg(long)]
    pub envs: Option<usize>,
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Measurement window, s.
    #[arg(long)]
    pub window: Option<f64>,
    /// Starting gains JSON (a gain schedule or an earlier calibration).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Start from random gains within this factor of nominal instead.
    #[arg(long)]
    pub init_spread: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_gains(path: &Path) -> Result<GainSchedule, CliError> {
    let v: Value = read_json(path)?;
    if v.get("joints").is_some() {
        serde_json::from_value(v).map_err(|e| CliError::op("parse", format!("{}: {e}", path.display())))
    } else {
        serde_json::from_value::<CalibrationResult>(v)
            .map(|r| r.gains)
            .map_err(|e| CliError::op("parse", format!("{}: {e}", path.display())))
    }
}

fn load_plant(path: Option<&Path>, fallback: PlantModel) -> Result<PlantModel, CliError> {
    let plant = match path {
        Some(p) => read_json(p)?,
        None => fallback,
    };
    plant.validate()?;
    Ok(plant)
}

pub fn calibrate_gains(ctx: &Context, a: &CalibrateGainsArgs) -> Result<(), CliError> {
    let plant = load_plant(a.plant.as_deref(), PlantModel::arm4())?;
    let d = CalibrationConfig::default();
    let cfg = CalibrationConfig {
        omega_n: a.omega_n.unwrap_or(d.omega_n),
        zeta: a.zeta.unwrap_or(d.zeta),
        n_envs: a.envs.unwrap_or(d.n_envs),
        sweeps: a.sweeps.unwrap_or(d.sweeps),
        measure_window: a.window.unwrap_or(d.measure_window),
        ..d
    };
    let init = match (&a.init, a.init_spread) {
        (Some(_), Some(_)) => return Err(CliError::usage("give --init or --init-spread, not both")),
        (Some(p), None) => load_gains(p)?,
        (None, Some(spread)) => {
            if !(spread >= 1.0) {
                return Err(CliError::usage(format!("--init-spread must be >= 1, got {spread}")));
            }
            random_initial_gains(&plant, &cfg, spread, ctx.seed)
        }
        (None, None) => GainSchedule::new(
            plant
                .nominal_inertia()
                .into_iter()
                .map(|m| JointGains::from_impedance(m, cfg.omega_n, cfg.zeta, 0.0))
                .collect(),
        ),
    };
    let result = calibrate_chain(&plant, &cfg, &init, ctx.seed)?;
    if !result.converged {
        log::warn!("calibration did not converge within {} sweeps", cfg.sweeps);
    }
    ctx.emit_json(a.out.as_deref(), &result, a)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateArgs {
    /// Plant model JSON; a single 1 kg m^2 joint if omitted.
    #[arg(long)]
    pub plant: Option<PathBuf>,
    /// Gain schedule or calibration JSON; critically damped at --omega-n on
    /// the nominal inertia if omitted.
    #[arg(long)]
    pub gains: Option<PathBuf>,
    #[arg(long)]
    pub omega_n: Option<f64>,
    /// Overrides the feedforward ratio of every joint.
    #[arg(long)]
    pub eta: Option<f64>,
    /// `sin:A,w`, `ramp:r`, `const:v` or `step:v,t0`.
    #[arg(long = "ref")]
    #[serde(rename = "ref")]
    pub reference: Option<String>,
    /// s
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub control_dt: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn simulate(ctx: &Context, a: &SimulateArgs) -> Result<(), CliError> {
    let plant = load_plant(a.plant.as_deref(), PlantModel::decoupled(vec![1.0]))?;
    let mut gains = match &a.gains {
        Some(p) => load_gains(p)?,
        None => GainSchedule::new(
            plant
                .nominal_inertia()
                .into_iter()
                .map(|m| JointGains::from_impedance(m, a.omega_n.unwrap_or(10.0), 1.0, 0.0))
                .collect(),
        ),
    };
    if let Some(eta) = a.eta {
        gains = gains.with_eta(eta);
    }
    let reference = Signal::parse(a.reference.as_deref().unwrap_or("sin:0.3,3.14")).map_err(CliError::usage)?;
    let episode = run_episode(
        &plant,
        &gains,
        &reference,
        a.duration.unwrap_or(10.0),
        a.control_dt.unwrap_or(0.02),
        None,
    )?;
    match ctx.format {
        Some(Format::Json) => ctx.emit_json(a.out.as_deref(), &episode, a),
        _ => ctx.emit(a.out.as_deref(), episode.to_csv().as_bytes(), a),
    }
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DelayCurveArgs {
    /// `start:stop:step` or a comma list.
    #[arg(long)]
    pub etas: Option<String>,
    #[arg(long)]
    pub omega_n: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    /// kg m^2
    #[arg(long)]
    pub inertia: Option<f64>,
    /// Reference frequency, rad/s.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Reference amplitude, rad.
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub control_dt: Option<f64>,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn delay_curve(ctx: &Context, a: &DelayCurveArgs) -> Result<(), CliError> {
    let etas = parse_etas(a.etas.as_deref().unwrap_or("0:1:0.1")).map_err(CliError::usage)?;
    let d = DelayCurveConfig::default();
    let cfg = DelayCurveConfig {
        omega_n: a.omega_n.unwrap_or(d.omega_n),
        zeta: a.zeta.unwrap_or(d.zeta),
        inertia: a.inertia.unwrap_or(d.inertia),
        omega: a.omega.unwrap_or(d.omega),
        amplitude: a.amplitude.unwrap_or(d.amplitude),
        control_dt: a.control_dt.unwrap_or(d.control_dt),
        duration: a.duration.unwrap_or(d.duration),
        ..d
    };
    let points = extremctl_core::experiments::delay_curve(&cfg, &etas)?;
    match ctx.format {
        Some(Format::Json) => ctx.emit_json(a.out.as_deref(), &points, a),
        _ => ctx.emit(a.out.as_deref(), delay_curve_csv(&points).as_bytes(), a),
    }
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyArgs {
    /// Directories of numbered PGM frames.
    #[arg(long)]
    pub frames_a: Option<PathBuf>,
    #[arg(long)]
    pub frames_b: Option<PathBuf>,
    /// Directories of numbered XFLW flow fields.
    #[arg(long)]
    pub flows_a: Option<PathBuf>,
    #[arg(long)]
    pub flows_b: Option<PathBuf>,
    /// `t,value` CSV files.
    #[arg(long)]
    pub signal_a: Option<PathBuf>,
    #[arg(long)]
    pub signal_b: Option<PathBuf>,
    /// `x,y,w,h,dx,dy`: pixel box and motion direction.
    #[arg(long)]
    pub region_a: Option<String>,
    #[arg(long)]
    pub region_b: Option<String>,
    #[arg(long)]
    pub fps: Option<f64>,
    /// s
    #[arg(long)]
    pub max_lag: Option<f64>,
    /// Block-matching block edge and search radius, pixels.
    #[arg(long)]
    pub block: Option<u32>,
    #[arg(long)]
    pub radius: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn latency(ctx: &Context, a: &LatencyArgs) -> Result<(), CliError> {
    let max_lag = a.max_lag.unwrap_or(DEFAULT_MAX_LAG);
    let pair = |x: &Option<PathBuf>, y: &Option<PathBuf>| x.is_some() || y.is_some();
    let modes = [
        pair(&a.frames_a, &a.frames_b),
        pair(&a.flows_a, &a.flows_b),
        pair(&a.signal_a, &a.signal_b),
    ];
    if modes.iter().filter(|&&m| m).count() != 1 {
        return Err(CliError::usage(
            "give exactly one input pair: --frames-a/--frames-b, --flows-a/--flows-b or --signal-a/--signal-b",
        ));
    }
    let regions = || -> Result<(RegionSpec, RegionSpec), CliError> {
        let parse = |s: &Option<String>, flag| {
            RegionSpec::parse(required(s, flag)?).map_err(|e| CliError::usage(format!("--{flag}: {e}")))
        };
        Ok((parse(&a.region_a, "region-a")?, parse(&a.region_b, "region-b")?))
    };
    let fps = || -> Result<f64, CliError> {
        match a.fps {
            Some(f) if f > 0.0 => Ok(f),
            Some(f) => Err(CliError::usage(format!("--fps must be positive, got {f}"))),
            None => Err(CliError::usage("missing --fps")),
        }
    };
    let report = if modes[0] {
        let (ra, rb) = regions()?;
        let d = FlowParams::default();
        let params = FlowParams {
            block: a.block.unwrap_or(d.block),
            radius: a.radius.unwrap_or(d.radius),
            ..d
        };
        let fa = read_frames(required(&a.frames_a, "frames-a")?)?;
        let fb = read_frames(required(&a.frames_b, "frames-b")?)?;
        analyze_frames(&fa, &fb, &ra, &rb, fps()?, &params, max_lag)?
    } else if modes[1] {
        let (ra, rb) = regions()?;
        let fps = fps()?;
        let sa = flow_signal(&read_flows(required(&a.flows_a, "flows-a")?)?, &ra, fps)?;
        let sb = flow_signal(&read_flows(required(&a.flows_b, "flows-b")?)?, &rb, fps)?;
        analyze_signals(&sa, &sb, max_lag)?
    } else {
        let sa = read_signal_csv(required(&a.signal_a, "signal-a")?)?;
        let sb = read_signal_csv(required(&a.signal_b, "signal-b")?)?;
        analyze_signals(&sa, &sb, max_lag)?
    };
    if report.low_confidence {
        log::warn!("low confidence alignment: peak correlation {:.3}", report.confidence);
    }
    if a.out.is_some() {
        println!(
            "{}",
            serde_json::json!({ "lag_ms": report.lag_ms, "confidence": report.confidence, "low_confidence": report.low_confidence })
        );
    }
    ctx.emit_json(a.out.as_deref(), &report, a)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineArgs {
    /// Feedforward ratios to run, `start:stop:step` or a comma list. At
    /// least three for the fit; without it, one run at the configured gains.
    #[arg(long)]
    pub eta_sweep: Option<String>,
    /// s
    #[arg(long)]
    pub network_delay: Option<f64>,
    #[arg(long)]
    pub jitter_std: Option<f64>,
    #[arg(long)]
    pub drop_prob: Option<f64>,
    #[arg(long)]
    pub duration: Option<f64>,
    /// Hz
    #[arg(long)]
    pub capture_rate: Option<f64>,
    #[arg(long)]
    pub control_rate: Option<f64>,
    #[arg(long)]
    pub lowlevel_rate: Option<f64>,
    /// Writes human and robot signal CSVs per run here.
    #[arg(long)]
    pub record_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// The config file for this command is a pipeline config; the flags
/// override its fields.
pub fn pipeline(ctx: &Context, flags: &PipelineArgs, config: &Value) -> Result<(), CliError> {
    let merged = merge(flags, config)?;
    let a: PipelineArgs = serde_json::from_value(merged.clone()).map_err(|e| CliError::usage(format!("config: {e}")))?;
    let cfg: PipelineConfig =
        serde_json::from_value(merged).map_err(|e| CliError::usage(format!("pipeline config: {e}")))?;
    let run_one = |cfg: &PipelineConfig| -> Result<LatencyBudget, CliError> {
        let record = run_pipeline(cfg, ctx.seed)?;
        if let Some(dir) = &a.record_dir {
            fs::create_dir_all(dir).map_err(|e| CliError::op("io", format!("{}: {e}", dir.display())))?;
            let eta = record.eta;
            for (name, body) in [
                ("human", signal_csv(&record.human_signal(), "human_rad")),
                ("robot", signal_csv(&record.robot_signal(), "robot_rad")),
            ] {
                let path = dir.join(format!("{name}_eta{eta}.csv"));
                fs::write(&path, body).map_err(|e| CliError::op("io", format!("{}: {e}", path.display())))?;
            }
        }
        Ok(latency_budget(&record)?)
    };
    let Some(spec) = &a.eta_sweep else {
        let budget = run_one(&cfg)?;
        return match ctx.format {
            Some(Format::Csv) => ctx.emit(a.out.as_deref(), budgets_csv(&[budget]).as_bytes(), &cfg),
            _ => ctx.emit_json(a.out.as_deref(), &budget, &cfg),
        };
    };
    let etas = parse_etas(spec).map_err(CliError::usage)?;
    let budgets = etas
        .iter()
        .map(|&eta| run_one(&cfg.with_eta(eta)))
        .collect::<Result<Vec<_>, _>>()?;
    let points: Vec<(f64, f64)> = budgets.iter().map(|b| (b.control_ms, b.overall_ms)).collect();
    let report = SweepReport {
        fit: fit_line(&points)?,
        budgets,
    };
    match ctx.format {
        Some(Format::Csv) => ctx.emit(a.out.as_deref(), budgets_csv(&report.budgets).as_bytes(), &cfg),
        _ => ctx.emit_json(a.out.as_deref(), &report, &cfg),
    }
}

fn budgets_csv(budgets: &[LatencyBudget]) -> String {
    let mut out = String::from("eta,transport_ms,hold_ms,control_ms,overall_ms,accounting_error\n");
    for b in budgets {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            b.eta, b.transport_ms, b.hold_ms, b.control_ms, b.overall_ms, b.accounting_error
        ));
    }
    out
}
