//! Tracking delay against feedforward ratio: closed-form prediction next to
//! a simulated, cross-correlated measurement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::{estimate_lag, LatencyError, MotionSignal};
use crate::plant::analysis::{equivalent_delay, frequency_response};
use crate::plant::{interval_overshoot, run_episode, GainSchedule, JointGains, PlantError, PlantModel, Signal};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelayCurveConfig {
    /// rad/s
    pub omega_n: f64,
    pub zeta: f64,
    /// kg m^2
    pub inertia: f64,
    /// Reference sinusoid amplitude, rad, and frequency, rad/s.
    pub amplitude: f64,
    pub omega: f64,
    /// s
    pub control_dt: f64,
    pub physics_dt: f64,
    pub duration: f64,
    /// Leading stretch left out of the measurement, s.
    pub settle: f64,
    pub max_lag: f64,
}

impl Default for DelayCurveConfig {
    fn default() -> Self {
        DelayCurveConfig {
            omega_n: 10.0,
            zeta: 1.0,
            inertia: 1.0,
            amplitude: 0.3,
            omega: 3.14,
            control_dt: 0.02,
            physics_dt: 1e-3,
            duration: 12.0,
            settle: 2.0,
            max_lag: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayPoint {
    pub eta: f64,
    /// `2 zeta (1 - eta) / omega_n`, ms.
    pub theory_ms: f64,
    /// `-phase / omega` of the continuous closed loop at the test frequency, ms.
    pub phase_ms: f64,
    /// Held target to joint, ms.
    pub simulated_ms: f64,
    /// Continuous reference to joint; adds the hold's own lag, ms.
    pub simulated_reference_ms: f64,
    pub confidence: f64,
    /// Largest per-interval overshoot past the held target after settling,
    /// under a unit ramp with the same gains, rad. A sinusoid is no use here:
    /// around each reversal a lagging joint sits past the target anyway.
    pub ramp_overshoot: f64,
}

pub fn delay_point(config: &DelayCurveConfig, eta: f64) -> Result<DelayPoint, ExperimentError> {
    if !(config.settle >= 0.0 && config.duration > config.settle + 2.0 * config.max_lag) {
        return Err(ExperimentError::Invalid(format!(
            "duration {} too short for settle {} and max_lag {}",
            config.duration, config.settle, config.max_lag
        )));
    }
    let plant = PlantModel {
        physics_dt: config.physics_dt,
        ..PlantModel::decoupled(vec![config.inertia])
    };
    let gains = JointGains::from_impedance(config.inertia, config.omega_n, config.zeta, eta);
    let reference = Signal::Sine {
        amplitude: config.amplitude,
        omega: config.omega,
    };
    let episode = run_episode(
        &plant,
        &GainSchedule::new(vec![gains]),
        &reference,
        config.duration,
        config.control_dt,
        None,
    )?;
    let skip = (config.settle / config.physics_dt).round() as usize;
    let rate = 1.0 / config.physics_dt;
    let tr = &episode.joints[0];
    let sig = |v: &[f64]| MotionSignal::new(v[skip..].to_vec(), rate, episode.t[skip]);
    let q = sig(&tr.q_measured)?;
    let held = estimate_lag(&sig(&tr.q_target)?, &q, config.max_lag)?;
    let continuous = estimate_lag(&sig(&tr.q_reference)?, &q, config.max_lag)?;

    let ramp = run_episode(
        &plant,
        &GainSchedule::new(vec![gains]),
        &Signal::Ramp { rate: 1.0 },
        config.settle + 2.0,
        config.control_dt,
        None,
    )?;
    let intervals_to_skip = (config.settle / config.control_dt).ceil() as usize;
    let ramp_overshoot = interval_overshoot(&ramp, 0)
        .into_iter()
        .skip(intervals_to_skip)
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(DelayPoint {
        eta,
        theory_ms: equivalent_delay(&gains) * 1e3,
        phase_ms: frequency_response(&gains, config.omega).delay(config.omega) * 1e3,
        simulated_ms: held.lag * 1e3,
        simulated_reference_ms: continuous.lag * 1e3,
        confidence: held.confidence,
        ramp_overshoot,
    })
}

pub fn delay_curve(config: &DelayCurveConfig, etas: &[f64]) -> Result<Vec<DelayPoint>, ExperimentError> {
    etas.iter().map(|&eta| delay_point(config, eta)).collect()
}

/// CSV with a unit-labelled header.
pub fn delay_curve_csv(points: &[DelayPoint]) -> String {
    let mut out = String::from(
        "eta,theory_ms,phase_ms,simulated_ms,simulated_reference_ms,confidence,ramp_overshoot_rad\n",
    );
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.eta, p.theory_ms, p.phase_ms, p.simulated_ms, p.simulated_reference_ms, p.confidence, p.ramp_overshoot
        ));
    }
    out
}

/// Parses `start:stop:step` (inclusive stop) or a comma list.
pub fn parse_etas(spec: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("bad number {s:?} in {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [a, b, s] => {
            let (a, b, s) = (num(a)?, num(b)?, num(s)?);
            if !(s > 0.0) || b < a {
                return Err(format!("range {spec:?} needs start <= stop and a positive step"));
            }
            let n = ((b - a) / s + 1e-9).floor() as usize;
            // rounded so 0:1:0.1 gives 0.3 rather than 0.30000000000000004
            Ok((0..=n).map(|i| ((a + i as f64 * s) * 1e12).round() / 1e12).collect())
        }
        [_] => spec.split(',').map(num).collect(),
        _ => Err(format!("expected start:stop:step or a comma list, got {spec:?}")),
    }
}
