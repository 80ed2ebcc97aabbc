//! `extremctl`: one binary over the whole core library.
//!
//! Every subcommand takes its options as flags or as keys of the JSON file
//! given with `--config`; flags win. Keys use the flag name with
//! underscores (`--omega-n` is `omega_n`).

mod commands;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use commands::*;

#[derive(Parser, Debug)]
#[command(name = "extremctl", version, about = "Humanoid teleoperation control toolkit")]
struct Cli {
    /// Seed for every stochastic step. Falls back to a `seed` key in the
    /// config, then EXTREMCTL_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON object of option values for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory that relative --out paths are resolved against.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    log_level: LogLevel,
    /// Output format where a command offers both.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a mapping profile from a human neutral pose.
    CalibrateMap(CalibrateMapArgs),
    /// Map a JSON-lines stream of human frames to robot link targets.
    Map(MapArgs),
    /// Identify effective inertias and synthesize PD gains.
    CalibrateGains(CalibrateGainsArgs),
    /// Simulate a plant tracking a reference.
    Simulate(SimulateArgs),
    /// Predicted and simulated tracking delay per feedforward ratio.
    DelayCurve(DelayCurveArgs),
    /// Estimate the lag between two recordings.
    Latency(LatencyArgs),
    /// Run the streaming harness and report the latency budget.
    Pipeline(PipelineArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Op { kind: &'static str, message: String },
}

impl CliError {
    pub fn op(kind: &'static str, e: impl fmt::Display) -> Self {
        CliError::Op {
            kind,
            message: e.to_string(),
        }
    }

    pub fn usage(e: impl fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }
}

macro_rules! op_error {
    ($($ty:ty => $kind:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::op($kind, e)
            }
        })*
    };
}

op_error! {
    extremctl_core::mapping::MappingError => "mapping",
    extremctl_core::impedance::CalibError => "calibration",
    extremctl_core::plant::PlantError => "plant",
    extremctl_core::latency::LatencyError => "latency",
    extremctl_core::pipeline::PipelineError => "pipeline",
    extremctl_core::experiments::ExperimentError => "experiment",
}

/// Shared state every command sees.
pub struct Context {
    pub seed: u64,
    pub format: Option<Format>,
    output_dir: Option<PathBuf>,
    command: &'static str,
    started: SystemTime,
    clock: Instant,
}

impl Context {
    /// Writes `bytes` to `out` (or stdout) plus a `<out>.meta.json` holding
    /// everything that changes from run to run.
    pub fn emit(&self, out: Option<&Path>, bytes: &[u8], inputs: &impl Serialize) -> Result<(), CliError> {
        let Some(out) = out else {
            use std::io::Write;
            return std::io::stdout()
                .write_all(bytes)
                .map_err(|e| CliError::op("io", format!("stdout: {e}")));
        };
        let path = match &self.output_dir {
            Some(dir) if out.is_relative() => dir.join(out),
            _ => out.to_path_buf(),
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CliError::op("io", format!("{}: {e}", parent.display())))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::op("io", format!("{}: {e}", path.display())))?;
        let unix = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let meta = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "started_unix_s": unix(self.started),
            "finished_unix_s": unix(SystemTime::now()),
            "elapsed_s": self.clock.elapsed().as_secs_f64(),
            "output": path.display().to_string(),
            "inputs": inputs,
        });
        let mut meta_path = path.clone().into_os_string();
        meta_path.push(".meta.json");
        fs::write(&meta_path, serde_json::to_string_pretty(&meta).unwrap() + "\n")
            .map_err(|e| CliError::op("io", format!("{}: {e}", Path::new(&meta_path).display())))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    pub fn emit_json(&self, out: Option<&Path>, value: &impl Serialize, inputs: &impl Serialize) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::op("io", e))? + "\n";
        self.emit(out, text.as_bytes(), inputs)
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::op("io", format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::op("parse", format!("{}: {e}", path.display())))
}

/// Overlays the flags that were given onto the config object.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: &Value) -> Result<Value, CliError> {
    let mut base = match config {
        Value::Object(m) => m.clone(),
        Value::Null => Default::default(),
        _ => return Err(CliError::usage("--config must hold a JSON object")),
    };
    if let Value::Object(f) = serde_json::to_value(flags).map_err(CliError::usage)? {
        for (k, v) in f {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    Ok(Value::Object(base))
}

pub fn resolve<T: Serialize + DeserializeOwned>(flags: &T, config: &Value) -> Result<T, CliError> {
    serde_json::from_value(merge(flags, config)?).map_err(|e| CliError::usage(format!("config: {e}")))
}

fn seed(flag: Option<u64>, config: &Value) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(v) = config.get("seed") {
        return v
            .as_u64()
            .ok_or_else(|| CliError::usage(format!("config seed must be a non-negative integer, got {v}")));
    }
    match std::env::var("EXTREMCTL_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("EXTREMCTL_SEED={s:?} is not a non-negative integer"))),
        Err(_) => Ok(0),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => read_json::<Value>(p)?,
        None => Value::Null,
    };
    let format = match (cli.format, config.get("format")) {
        (Some(f), _) => Some(f),
        (None, Some(v)) => Some(serde_json::from_value(v.clone()).map_err(|e| CliError::usage(format!("config format: {e}")))?),
        (None, None) => None,
    };
    let command = match &cli.command {
        Command::CalibrateMap(_) => "calibrate-map",
        Command::Map(_) => "map",
        Command::CalibrateGains(_) => "calibrate-gains",
        Command::Simulate(_) => "simulate",
        Command::DelayCurve(_) => "delay-curve",
        Command::Latency(_) => "latency",
        Command::Pipeline(_) => "pipeline",
    };
    let ctx = Context {
        seed: seed(cli.seed, &config)?,
        format,
        output_dir: cli.output_dir.clone(),
        command,
        started: SystemTime::now(),
        clock: Instant::now(),
    };
    log::debug!("{command} with seed {}", ctx.seed);
    match &cli.command {
        Command::CalibrateMap(a) => calibrate_map(&ctx, &resolve(a, &config)?),
        Command::Map(a) => map(&ctx, &resolve(a, &config)?),
        Command::CalibrateGains(a) => calibrate_gains(&ctx, &resolve(a, &config)?),
        Command::Simulate(a) => simulate(&ctx, &resolve(a, &config)?),
        Command::DelayCurve(a) => delay_curve(&ctx, &resolve(a, &config)?),
        Command::Latency(a) => latency(&ctx, &resolve(a, &config)?),
        Command::Pipeline(a) => pipeline(&ctx, a, &config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.log_level {
        LogLevel::Error => log::LevelFilter::Error,
        LogLevel::Warn => log::LevelFilter::Warn,
        LogLevel::Info => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind, message) = match e {
                CliError::Usage(m) => (2, "usage", m),
                CliError::Op { kind, message } => (1, kind, message),
            };
            eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
            ExitCode::from(code)
        }
    }
}
