//! End-to-end harness: pose producer, lossy transport, latest-value
//! mailbox, Cartesian mapping, held joint targets, and the plant, all on
//! one virtual clock.
//!
//! No policy sits between mapping and control. The driven joint is the
//! right arm's elevation, read off the mapped hand position relative to the
//! robot shoulder.

pub mod channel;
pub mod codec;
pub mod mailbox;

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::{estimate_lag, LatencyError, MotionSignal, DEFAULT_MAX_LAG};
use crate::latency::synth::reciprocating;
use crate::mapping::{calibrate, map_frame, reference_human_neutral, LinkSet, MappingError, RobotModel};
use crate::plant::{
    step, substeps_per_tick, ControlTargets, GainSchedule, JointGains, JointState, PlantError, PlantModel,
};
use crate::se3::{compose, relative, Pose, Rotation, Vec3};

pub use channel::{send_udp, SimChannel, UdpReceiver};
pub use codec::{decode_frame, encode_frame, CodecError, PoseFrame, WireLink, FRAME_SIZE};
pub use mailbox::{Mailbox, Read, Reader};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    ConfigInvalid(String),
    #[error("need at least 3 points to fit, got {0}")]
    InsufficientPoints(usize),
    #[error("all points share the same x, no line through them")]
    DegenerateFit,
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Latency(#[from] LatencyError),
}

/// Operator arm elevation over time, rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionSpec {
    Sine { amplitude: f64, frequency_hz: f64 },
    /// [`reciprocating`] scaled to `amplitude`.
    Reciprocating { amplitude: f64 },
}

impl Default for MotionSpec {
    fn default() -> Self {
        MotionSpec::Sine {
            amplitude: 0.3,
            frequency_hz: 3.14 / TAU,
        }
    }
}

impl MotionSpec {
    pub fn angle(&self, t: f64) -> f64 {
        match *self {
            MotionSpec::Sine { amplitude, frequency_hz } => amplitude * (TAU * frequency_hz * t).sin(),
            MotionSpec::Reciprocating { amplitude } => amplitude * reciprocating(t),
        }
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let (a, f) = match *self {
            MotionSpec::Sine { amplitude, frequency_hz } => (amplitude, frequency_hz),
            MotionSpec::Reciprocating { amplitude } => (amplitude, 1.0),
        };
        if !(a > 0.0 && a < 1.5 && f > 0.0 && f.is_finite()) {
            return Err(PipelineError::ConfigInvalid(format!(
                "motion needs 0 < amplitude < 1.5 rad and a positive frequency, got {self:?}"
            )));
        }
        Ok(())
    }
}

fn default_human() -> LinkSet {
    reference_human_neutral(1.0, 0.6)
}

fn default_profile() -> crate::mapping::CalibrationProfile {
    calibrate(&default_human(), &RobotModel::small_humanoid()).expect("reference bodies calibrate")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Hz
    pub capture_rate: f64,
    pub control_rate: f64,
    pub lowlevel_rate: f64,
    /// s
    pub network_delay: f64,
    pub jitter_std: f64,
    pub drop_prob: f64,
    /// Simulated time, s.
    pub duration: f64,
    /// Leading stretch left out of lag analysis, s.
    pub settle: f64,
    /// Search range for lag estimation, s.
    pub max_lag: f64,
    /// Inertia of the driven joint, kg m^2.
    pub inertia: f64,
    /// One entry, for the driven joint.
    pub gains: GainSchedule,
    /// Operator neutral pose; the arm motion is applied on top of it.
    pub human: LinkSet,
    pub profile: crate::mapping::CalibrationProfile,
    pub motion: MotionSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            capture_rate: 120.0,
            control_rate: 50.0,
            lowlevel_rate: 1000.0,
            network_delay: 0.0,
            jitter_std: 0.0,
            drop_prob: 0.0,
            duration: 12.0,
            settle: 2.0,
            max_lag: DEFAULT_MAX_LAG,
            inertia: 1.0,
            gains: GainSchedule::uniform(1, JointGains::from_impedance(1.0, 10.0, 1.0, 0.9)),
            human: default_human(),
            profile: default_profile(),
            motion: MotionSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn with_eta(&self, eta: f64) -> Self {
        PipelineConfig {
            gains: self.gains.with_eta(eta),
            ..self.clone()
        }
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    pub fn plant(&self) -> PlantModel {
        PlantModel {
            physics_dt: 1.0 / self.lowlevel_rate,
            ..PlantModel::decoupled(vec![self.inertia])
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::ConfigInvalid(m));
        for (name, r) in [
            ("capture_rate", self.capture_rate),
            ("control_rate", self.control_rate),
            ("lowlevel_rate", self.lowlevel_rate),
        ] {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("{name} must be positive, got {r}"));
            }
        }
        let ratio = self.lowlevel_rate / self.control_rate;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
            return bad(format!(
                "lowlevel_rate {} is not a multiple of control_rate {}",
                self.lowlevel_rate, self.control_rate
            ));
        }
        if !(self.network_delay >= 0.0 && self.network_delay.is_finite()) {
            return bad(format!("network_delay = {}", self.network_delay));
        }
        if !(self.jitter_std >= 0.0 && self.jitter_std.is_finite()) {
            return bad(format!("jitter_std = {}", self.jitter_std));
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return bad(format!("drop_prob must be in [0, 1), got {}", self.drop_prob));
        }
        if !(self.settle >= 0.0 && self.duration > self.settle + 2.0 * self.max_lag.max(MIN_ANALYSIS)) {
            return bad(format!(
                "duration {} leaves too little after settle {} for max_lag {}",
                self.duration, self.settle, self.max_lag
            ));
        }
        if !(self.max_lag > 0.0) {
            return bad(format!("max_lag = {}", self.max_lag));
        }
        if self.gains.len() != 1 {
            return bad(format!("gains must hold exactly one joint, got {}", self.gains.len()));
        }
        self.gains.validate()?;
        self.plant().validate()?;
        self.motion.validate()?;
        self.profile.robot.validate()?;
        Ok(())
    }
}

/// Shortest analysed stretch, s.
const MIN_ANALYSIS: f64 = 0.5;

/// When a frame was captured and when it reached the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameStamp {
    pub seq: u32,
    pub capture_ns: u64,
    /// `None` if the frame was lost.
    pub arrival_ns: Option<u64>,
}

/// One control tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadStamp {
    pub tick_ns: u64,
    /// Frame the target came from; `None` before the first arrival.
    pub seq: Option<u32>,
    pub staleness_ns: Option<u64>,
    pub fresh: bool,
}

/// Everything one run produced, sampled at the low-level rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub eta: f64,
    pub lowlevel_rate: f64,
    pub control_dt: f64,
    pub settle: f64,
    pub max_lag: f64,
    /// s
    pub t: Vec<f64>,
    /// Operator arm elevation at `t`, rad.
    pub human: Vec<f64>,
    /// Held joint target, rad.
    pub target: Vec<f64>,
    /// Realized joint angle, rad.
    pub robot: Vec<f64>,
    pub frames: Vec<FrameStamp>,
    pub reads: Vec<ReadStamp>,
}

impl PipelineRecord {
    fn analysed(&self, samples: &[f64]) -> MotionSignal {
        let skip = ((self.settle * self.lowlevel_rate).round() as usize).min(samples.len().saturating_sub(2));
        MotionSignal::new(samples[skip..].to_vec(), self.lowlevel_rate, self.t[skip])
            .expect("validated config leaves samples to analyse")
    }

    /// After the settling stretch.
    pub fn human_signal(&self) -> MotionSignal {
        self.analysed(&self.human)
    }

    pub fn target_signal(&self) -> MotionSignal {
        self.analysed(&self.target)
    }

    pub fn robot_signal(&self) -> MotionSignal {
        self.analysed(&self.robot)
    }

    /// Mean staleness of control reads after settling, s.
    pub fn mean_staleness(&self) -> Option<f64> {
        let from = (self.settle * 1e9) as u64;
        let s: Vec<u64> = self
            .reads
            .iter()
            .filter(|r| r.tick_ns >= from)
            .filter_map(|r| r.staleness_ns)
            .collect();
        (!s.is_empty()).then(|| s.iter().map(|&x| x as f64).sum::<f64>() / s.len() as f64 * 1e-9)
    }
}

/// Operator pose with the right arm raised by `angle` about the shoulder.
pub fn human_frame(neutral: &LinkSet, profile: &crate::mapping::CalibrationProfile, angle: f64) -> LinkSet {
    let shoulder = profile.human_shoulder.right;
    let l = profile.human_arm_length.right;
    let mut out = neutral.clone();
    let local = Pose::new(
        Rotation::from_axis_angle(&Vec3::y(), -angle).expect("unit axis"),
        shoulder + l * Vec3::new(angle.cos(), 0.0, angle.sin()),
    );
    out.right_hand = compose(&neutral.torso, &local);
    out
}

/// Right arm elevation of a mapped robot frame, rad.
pub fn arm_elevation(robot: &RobotModel, mapped: &LinkSet) -> f64 {
    let d = relative(&mapped.torso, &mapped.right_hand).translation - robot.shoulder_offset.right;
    d.z.atan2(d.x)
}

fn ns(seconds: f64) -> u64 {
    (seconds * 1e9).round() as u64
}

/// Runs the whole chain for `config.duration` of virtual time. `seed`
/// drives jitter and drops only.
pub fn run_pipeline(config: &PipelineConfig, seed: u64) -> Result<PipelineRecord, PipelineError> {
    config.validate()?;
    let plant = config.plant();
    let gains = &config.gains;
    let control_dt = config.control_dt();
    let sub = substeps_per_tick(plant.physics_dt, control_dt)?;
    let steps = (config.duration * config.lowlevel_rate).round() as usize;
    let profile = &config.profile;

    let mailbox = Arc::new(Mailbox::new());
    let mut reader = Reader::new(mailbox.clone());
    let mut channel = SimChannel::new(config.network_delay, config.jitter_std, config.drop_prob, seed);

    let q0 = config.motion.angle(0.0);
    let mut states = vec![JointState::at_rest(q0)];
    let mut targets = ControlTargets::hold(vec![q0], control_dt);
    let mut previous_target: Option<f64> = None;

    let mut record = PipelineRecord {
        eta: gains.joints[0].eta,
        lowlevel_rate: config.lowlevel_rate,
        control_dt,
        settle: config.settle,
        max_lag: config.max_lag,
        t: Vec::with_capacity(steps),
        human: Vec::with_capacity(steps),
        target: Vec::with_capacity(steps),
        robot: Vec::with_capacity(steps),
        frames: Vec::new(),
        reads: Vec::new(),
    };
    let mut next_seq: u32 = 0;

    for k in 0..steps {
        let t = k as f64 / config.lowlevel_rate;
        let now = ns(t);

        // producer
        loop {
            let capture_ns = ns(next_seq as f64 / config.capture_rate);
            if capture_ns > now {
                break;
            }
            let angle = config.motion.angle(capture_ns as f64 * 1e-9);
            let frame = PoseFrame::from_links(next_seq, capture_ns, &human_frame(&config.human, profile, angle));
            let arrival_ns = channel.send(frame, capture_ns);
            record.frames.push(FrameStamp {
                seq: next_seq,
                capture_ns,
                arrival_ns,
            });
            next_seq += 1;
        }
        channel.deliver(now, &mailbox)?;

        // consumer
        if k % sub == 0 {
            let read = reader.read(now);
            if let Some(r) = &read {
                let q_t = arm_elevation(&profile.robot, &map_frame(profile, &r.frame.to_links()?));
                targets.q_t[0] = q_t;
                targets.qdot_t[0] = previous_target.map_or(0.0, |p| (q_t - p) / control_dt);
                previous_target = Some(q_t);
            }
            record.reads.push(ReadStamp {
                tick_ns: now,
                seq: read.as_ref().map(|r| r.frame.seq),
                staleness_ns: read.as_ref().map(|r| r.staleness_ns),
                fresh: read.as_ref().is_some_and(|r| r.fresh),
            });
        }

        record.t.push(t);
        record.human.push(config.motion.angle(t));
        record.target.push(targets.q_t[0]);
        record.robot.push(states[0].q);
        step(&plant, &mut states, &targets, gains, t)?;
    }
    Ok(record)
}

/// Latency decomposition of one run, milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBudget {
    pub eta: f64,
    /// Capture to control read: transport plus waiting for the next tick.
    pub transport_ms: f64,
    /// Half a control period, the mean age added by holding targets.
    pub hold_ms: f64,
    /// Held target to realized joint.
    pub control_ms: f64,
    /// Operator to realized joint, measured independently.
    pub overall_ms: f64,
    pub control_confidence: f64,
    pub overall_confidence: f64,
    /// `|transport + hold + control - overall| / overall`.
    pub accounting_error: f64,
}

impl LatencyBudget {
    /// Components account for the measured total within 25%.
    pub fn accounting_ok(&self) -> bool {
        self.accounting_error <= 0.25
    }
}

pub fn latency_budget(record: &PipelineRecord) -> Result<LatencyBudget, PipelineError> {
    let robot = record.robot_signal();
    let control = estimate_lag(&record.target_signal(), &robot, record.max_lag)?;
    let overall = estimate_lag(&record.human_signal(), &robot, record.max_lag)?;
    let transport_ms = record
        .mean_staleness()
        .ok_or_else(|| PipelineError::ConfigInvalid("no frame reached the controller after settling".into()))?
        * 1e3;
    let hold_ms = 0.5 * record.control_dt * 1e3;
    let control_ms = control.lag * 1e3;
    let overall_ms = overall.lag * 1e3;
    Ok(LatencyBudget {
        eta: record.eta,
        transport_ms,
        hold_ms,
        control_ms,
        overall_ms,
        control_confidence: control.confidence,
        overall_confidence: overall.confidence,
        accounting_error: ((transport_ms + hold_ms + control_ms - overall_ms) / overall_ms).abs(),
    })
}

/// Least-squares line `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(points: &[(f64, f64)]) -> Result<LinearFit, PipelineError> {
    if points.len() < 3 {
        return Err(PipelineError::InsufficientPoints(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(PipelineError::DegenerateFit);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Budgets across feedforward ratios and the overall-vs-control line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub budgets: Vec<LatencyBudget>,
    /// Fit of `overall_ms` against `control_ms`.
    pub fit: LinearFit,
}

pub fn sweep_eta(config: &PipelineConfig, etas: &[f64], seed: u64) -> Result<SweepReport, PipelineError> {
    if etas.len() < 3 {
        return Err(PipelineError::InsufficientPoints(etas.len()));
    }
    let budgets = etas
        .iter()
        .map(|&eta| latency_budget(&run_pipeline(&config.with_eta(eta), seed)?))
        .collect::<Result<Vec<_>, _>>()?;
    let points: Vec<(f64, f64)> = budgets.iter().map(|b| (b.control_ms, b.overall_ms)).collect();
    Ok(SweepReport {
        fit: fit_line(&points)?,
        budgets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_angle_survives_mapping() {
        let cfg = PipelineConfig::default();
        for angle in [-0.7, -0.2, 0.0, 0.3, 1.1] {
            let mapped = map_frame(&cfg.profile, &human_frame(&cfg.human, &cfg.profile, angle));
            let got = arm_elevation(&cfg.profile.robot, &mapped);
            assert!((got - angle).abs() < 1e-12, "{angle} -> {got}");
        }
    }

    #[test]
    fn fit_recovers_exact_line() {
        let pts: Vec<(f64, f64)> = [205.0, 160.0, 121.0, 83.0, 47.0]
            .iter()
            .map(|&x| (x, 0.58 * x + 32.0))
            .collect();
        let fit = fit_line(&pts).unwrap();
        assert!((fit.slope - 0.58).abs() < 1e-12);
        assert!((fit.intercept - 32.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(matches!(fit_line(&pts[..1]), Err(PipelineError::InsufficientPoints(1))));
        assert!(matches!(fit_line(&[(1.0, 2.0); 3]), Err(PipelineError::DegenerateFit)));
    }

    #[test]
    fn config_validation() {
        let ok = PipelineConfig::default();
        ok.validate().unwrap();
        for bad in [
            PipelineConfig { control_rate: 30.0, ..ok.clone() },
            PipelineConfig { drop_prob: 1.0, ..ok.clone() },
            PipelineConfig { capture_rate: 0.0, ..ok.clone() },
            PipelineConfig { network_delay: -0.01, ..ok.clone() },
            PipelineConfig { duration: 2.5, ..ok.clone() },
            PipelineConfig { gains: GainSchedule::uniform(2, ok.gains.joints[0]), ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(PipelineError::ConfigInvalid(_))), "{bad:?}");
        }
    }

    #[test]
    fn config_json_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"network_delay": 0.03}"#).unwrap();
        assert_eq!(cfg.network_delay, 0.03);
        assert_eq!(cfg.capture_rate, 120.0);
        let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
