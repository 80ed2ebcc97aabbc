//! Joint-level plant simulation under PD control with velocity feedforward.
//!
//! The actuator law is `tau = kp (q_t - q) - kd qdot + eta kd qdot_t`. Targets
//! are produced at the control rate and held constant (zero-order hold)
//! across physics substeps. Torque is computed once per physics step and held
//! over it. Decoupled joints integrate with semi-implicit Euler; the planar
//! chain, whose mass matrix depends on configuration, uses RK4 so energy does
//! not drift.

pub mod analysis;
pub mod chain;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{equivalent_delay, frequency_response, max_feedforward_ratio, FrequencyResponse};
pub use chain::LinkParams;

/// Low-level loop period used unless a model says otherwise, seconds.
pub const DEFAULT_PHYSICS_DT: f64 = 1e-3;
/// Measurement smoothing coefficient at the low-level rate.
pub const DEFAULT_FILTER_ALPHA: f64 = 0.1;
/// Any joint speed above this aborts the simulation, rad/s.
pub const BLOWUP_SPEED: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid plant model: {0}")]
    InvalidModel(String),
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("numerical blow-up on joint {joint} at t = {time:.6} s")]
    NumericalBlowup { joint: usize, time: f64 },
    #[error("timing: {0}")]
    BadTiming(String),
    #[error("low-pass coefficient {0} outside (0, 1]")]
    BadAlpha(f64),
    #[error("feedforward bound infeasible: omega_n * dt = {0} >= 4")]
    Infeasible(f64),
    #[error("expected {expected} joints, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

fn default_zeta() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

/// PD gains and feedforward ratio of one joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointGains {
    /// N m / rad
    pub kp: f64,
    /// N m s / rad
    pub kd: f64,
    #[serde(default)]
    pub eta: f64,
    /// Target natural frequency the gains were synthesized for, rad/s.
    #[serde(default)]
    pub omega_n: f64,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    /// Feedforward is disabled (`eta` ignored) on joints where this is false,
    /// e.g. indirect-drive joints.
    #[serde(default = "default_true")]
    pub feedforward: bool,
}

impl JointGains {
    pub fn pd(kp: f64, kd: f64) -> Self {
        JointGains {
            kp,
            kd,
            eta: 0.0,
            omega_n: 0.0,
            zeta: default_zeta(),
            feedforward: true,
        }
    }

    /// `kp = M wn^2`, `kd = 2 zeta M wn`.
    pub fn from_impedance(inertia: f64, omega_n: f64, zeta: f64, eta: f64) -> Self {
        JointGains {
            kp: inertia * omega_n * omega_n,
            kd: 2.0 * zeta * inertia * omega_n,
            eta,
            omega_n,
            zeta,
            feedforward: true,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    /// Feedforward ratio actually applied.
    pub fn effective_eta(&self) -> f64 {
        if self.feedforward {
            self.eta
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.kp >= 0.0) || !(self.kd >= 0.0) {
            return Err(PlantError::InvalidGains(format!(
                "kp = {}, kd = {} must be non-negative",
                self.kp, self.kd
            )));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(PlantError::InvalidGains(format!("eta = {} outside [0, 1]", self.eta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSchedule {
    pub joints: Vec<JointGains>,
}

impl GainSchedule {
    pub fn new(joints: Vec<JointGains>) -> Self {
        GainSchedule { joints }
    }

    pub fn uniform(n: usize, gains: JointGains) -> Self {
        GainSchedule {
            joints: vec![gains; n],
        }
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        self.joints.iter().try_for_each(JointGains::validate)
    }

    /// Same schedule with every joint's feedforward ratio set to `eta`.
    pub fn with_eta(&self, eta: f64) -> Self {
        GainSchedule {
            joints: self.joints.iter().map(|g| g.with_eta(eta)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantKind {
    /// Independent joints obeying `M qddot = tau`.
    DecoupledLinear { inertia: Vec<f64> },
    /// Serial planar chain with configuration-dependent coupling.
    PlanarChain { links: Vec<LinkParams> },
}

fn default_dt() -> f64 {
    DEFAULT_PHYSICS_DT
}

fn default_alpha() -> f64 {
    DEFAULT_FILTER_ALPHA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    #[serde(flatten)]
    pub kind: PlantKind,
    /// m/s^2, chain plants only
    #[serde(default)]
    pub gravity: f64,
    #[serde(default = "default_dt")]
    pub physics_dt: f64,
    #[serde(default = "default_alpha")]
    pub filter_alpha: f64,
    /// Optional hard stops per joint, rad.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_limits: Option<Vec<(f64, f64)>>,
}

impl PlantModel {
    pub fn decoupled(inertia: Vec<f64>) -> Self {
        PlantModel {
            kind: PlantKind::DecoupledLinear { inertia },
            gravity: 0.0,
            physics_dt: DEFAULT_PHYSICS_DT,
            filter_alpha: DEFAULT_FILTER_ALPHA,
            joint_limits: None,
        }
    }

    pub fn planar_chain(links: Vec<LinkParams>) -> Self {
        PlantModel {
            kind: PlantKind::PlanarChain { links },
            ..PlantModel::decoupled(Vec::new())
        }
    }

    pub fn dof(&self) -> usize {
        match &self.kind {
            PlantKind::DecoupledLinear { inertia } => inertia.len(),
            PlantKind::PlanarChain { links } => links.len(),
        }
    }

    /// Number of joints between joint `j` and the base.
    pub fn depth(&self, joint: usize) -> usize {
        match self.kind {
            PlantKind::DecoupledLinear { .. } => 0,
            PlantKind::PlanarChain { .. } => joint,
        }
    }

    /// Diagonal of the mass matrix at the zero configuration, kg m^2.
    pub fn nominal_inertia(&self) -> Vec<f64> {
        match &self.kind {
            PlantKind::DecoupledLinear { inertia } => inertia.clone(),
            PlantKind::PlanarChain { links } => {
                let m = chain::mass_matrix(links, &vec![0.0; links.len()]);
                m.diagonal().iter().copied().collect()
            }
        }
    }

    /// A 4-link arm used by examples and the calibration studies.
    pub fn arm4() -> Self {
        PlantModel::planar_chain(vec![
            LinkParams::rod(4.0, 0.45).with_armature(2.0),
            LinkParams::rod(3.0, 0.4).with_armature(1.5),
            LinkParams::rod(2.0, 0.35).with_armature(1.0),
            LinkParams::rod(1.5, 0.3).with_armature(0.5),
        ])
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.physics_dt > 0.0) {
            return Err(PlantError::InvalidModel(format!(
                "physics_dt = {} must be positive",
                self.physics_dt
            )));
        }
        if !(self.filter_alpha > 0.0 && self.filter_alpha <= 1.0) {
            return Err(PlantError::BadAlpha(self.filter_alpha));
        }
        match &self.kind {
            PlantKind::DecoupledLinear { inertia } => {
                if inertia.is_empty() || inertia.iter().any(|m| !(*m > 0.0)) {
                    return Err(PlantError::InvalidModel(format!(
                        "inertias {inertia:?} must be non-empty and positive"
                    )));
                }
            }
            PlantKind::PlanarChain { links } => {
                chain::validate_links(links).map_err(PlantError::InvalidModel)?;
            }
        }
        if let Some(limits) = &self.joint_limits {
            if limits.len() != self.dof() || limits.iter().any(|(lo, hi)| !(lo < hi)) {
                return Err(PlantError::InvalidModel(format!("bad joint limits {limits:?}")));
            }
        }
        Ok(())
    }

    /// Total mechanical energy of the plant alone.
    pub fn energy(&self, states: &[JointState]) -> f64 {
        let q: Vec<f64> = states.iter().map(|s| s.q).collect();
        let qd: Vec<f64> = states.iter().map(|s| s.qdot).collect();
        match &self.kind {
            PlantKind::DecoupledLinear { inertia } => inertia
                .iter()
                .zip(&qd)
                .map(|(m, v)| 0.5 * m * v * v)
                .sum(),
            PlantKind::PlanarChain { links } => {
                chain::kinetic_energy(links, &q, &qd) + chain::potential_energy(links, &q, self.gravity)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointState {
    /// rad
    pub q: f64,
    /// rad/s
    pub qdot: f64,
    /// Torque applied during the last step, N m.
    pub tau_applied: f64,
    /// Low-pass filtered measurement of `q`, rad.
    pub filtered_q: f64,
}

impl JointState {
    pub fn at_rest(q: f64) -> Self {
        JointState {
            q,
            qdot: 0.0,
            tau_applied: 0.0,
            filtered_q: q,
        }
    }
}

/// Commands held constant between control ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlTargets {
    pub q_t: Vec<f64>,
    pub qdot_t: Vec<f64>,
    /// Control period the targets are held for, s.
    pub control_dt: f64,
}

impl ControlTargets {
    pub fn hold(q_t: Vec<f64>, control_dt: f64) -> Self {
        let n = q_t.len();
        ControlTargets {
            q_t,
            qdot_t: vec![0.0; n],
            control_dt,
        }
    }
}

/// PD with velocity feedforward. With `eta = 0` this is plain PD.
pub fn actuator_torque(state: &JointState, q_t: f64, qdot_t: f64, gains: &JointGains) -> f64 {
    gains.kp * (q_t - state.q) - gains.kd * state.qdot + gains.effective_eta() * gains.kd * qdot_t
}

/// Exponential smoothing `prev + alpha (sample - prev)`.
pub fn lowpass(prev: f64, sample: f64, alpha: f64) -> Result<f64, PlantError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(PlantError::BadAlpha(alpha));
    }
    Ok((1.0 - alpha) * prev + alpha * sample)
}

/// One semi-implicit Euler step of `plant.physics_dt` under the actuator law.
///
/// `time` is only used to label errors.
pub fn step(
    plant: &PlantModel,
    states: &mut [JointState],
    targets: &ControlTargets,
    gains: &GainSchedule,
    time: f64,
) -> Result<(), PlantError> {
    let n = plant.dof();
    for got in [targets.q_t.len(), targets.qdot_t.len(), gains.len()] {
        if got != n {
            return Err(PlantError::DimensionMismatch { expected: n, got });
        }
    }
    for (i, s) in states.iter_mut().enumerate() {
        s.tau_applied = actuator_torque(s, targets.q_t[i], targets.qdot_t[i], &gains.joints[i]);
    }
    integrate(plant, states, time)
}

/// Advances the plant one step with the torques stored in `tau_applied`.
pub fn integrate(plant: &PlantModel, states: &mut [JointState], time: f64) -> Result<(), PlantError> {
    let n = plant.dof();
    if states.len() != n {
        return Err(PlantError::DimensionMismatch {
            expected: n,
            got: states.len(),
        });
    }
    let dt = plant.physics_dt;
    match &plant.kind {
        PlantKind::DecoupledLinear { inertia } => {
            for (s, m) in states.iter_mut().zip(inertia) {
                s.qdot += dt * s.tau_applied / m;
            }
        }
        PlantKind::PlanarChain { links } => {
            let q: Vec<f64> = states.iter().map(|s| s.q).collect();
            let qd: Vec<f64> = states.iter().map(|s| s.qdot).collect();
            let tau: Vec<f64> = states.iter().map(|s| s.tau_applied).collect();
            let (q1, qd1) = chain::rk4_step(links, &q, &qd, &tau, plant.gravity, dt).ok_or_else(|| {
                PlantError::InvalidModel("mass matrix lost positive definiteness".into())
            })?;
            for (s, (a, v)) in states.iter_mut().zip(q1.into_iter().zip(qd1)) {
                s.q = a;
                s.qdot = v;
            }
        }
    }

    let semi_implicit = matches!(plant.kind, PlantKind::DecoupledLinear { .. });
    for (i, s) in states.iter_mut().enumerate() {
        if semi_implicit {
            s.q += dt * s.qdot;
        }
        if let Some(limits) = &plant.joint_limits {
            let (lo, hi) = limits[i];
            if s.q < lo || s.q > hi {
                s.q = s.q.clamp(lo, hi);
                s.qdot = 0.0;
            }
        }
        s.filtered_q = lowpass(s.filtered_q, s.q, plant.filter_alpha)?;
        if !s.q.is_finite() || !s.qdot.is_finite() || s.qdot.abs() > BLOWUP_SPEED {
            return Err(PlantError::NumericalBlowup { joint: i, time });
        }
    }
    Ok(())
}

/// Joint position reference as a function of time.
pub trait Reference {
    fn sample(&self, t: f64, out: &mut [f64]);
}

impl<F: Fn(f64, &mut [f64])> Reference for F {
    fn sample(&self, t: f64, out: &mut [f64]) {
        self(t, out)
    }
}

/// Scalar test signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Signal {
    Constant { value: f64 },
    Sine { amplitude: f64, omega: f64 },
    Ramp { rate: f64 },
    Step { value: f64, at: f64 },
}

impl Signal {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Signal::Constant { value } => value,
            Signal::Sine { amplitude, omega } => amplitude * (omega * t).sin(),
            Signal::Ramp { rate } => rate * t,
            Signal::Step { value, at } => {
                if t >= at {
                    value
                } else {
                    0.0
                }
            }
        }
    }

    /// Parses `sin:A,w`, `ramp:r`, `const:v` or `step:v,t0`.
    pub fn parse(spec: &str) -> Result<Self, String> {
        let (kind, args) = spec.split_once(':').unwrap_or((spec, ""));
        let nums: Vec<f64> = args
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
            .collect::<Result<_, _>>()?;
        let want = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                Err(format!("{kind} expects {n} argument(s), got {}", nums.len()))
            }
        };
        match kind {
            "sin" | "sine" => want(2).map(|_| Signal::Sine {
                amplitude: nums[0],
                omega: nums[1],
            }),
            "ramp" => want(1).map(|_| Signal::Ramp { rate: nums[0] }),
            "const" | "constant" => want(1).map(|_| Signal::Constant { value: nums[0] }),
            "step" => want(2).map(|_| Signal::Step {
                value: nums[0],
                at: nums[1],
            }),
            other => Err(format!("unknown reference kind {other:?}")),
        }
    }
}

/// Applies one [`Signal`] to every joint.
impl Reference for Signal {
    fn sample(&self, t: f64, out: &mut [f64]) {
        let v = self.eval(t);
        out.iter_mut().for_each(|o| *o = v);
    }
}

/// Per-joint recorded traces of an episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JointTrace {
    /// Target as held by the controller, rad.
    pub q_target: Vec<f64>,
    /// Held velocity target, rad/s.
    pub qdot_target: Vec<f64>,
    /// Continuous reference at the sample time, rad.
    pub q_reference: Vec<f64>,
    pub q_measured: Vec<f64>,
    pub q_filtered: Vec<f64>,
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub physics_dt: f64,
    pub control_dt: f64,
    pub t: Vec<f64>,
    pub joints: Vec<JointTrace>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Samples recorded per control interval.
    pub fn substeps(&self) -> usize {
        (self.control_dt / self.physics_dt).round() as usize
    }

    /// CSV with `t_s` followed by target angle, measured angle and torque
    /// per joint.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s");
        let single = self.joints.len() == 1;
        for j in 0..self.joints.len() {
            if single {
                out.push_str(",q_target_rad,q_measured_rad,tau_Nm");
            } else {
                out.push_str(&format!(",q{j}_target_rad,q{j}_measured_rad,tau{j}_Nm"));
            }
        }
        out.push('\n');
        for (i, t) in self.t.iter().enumerate() {
            out.push_str(&format!("{t:.6}"));
            for tr in &self.joints {
                out.push_str(&format!(",{:.9},{:.9},{:.9}", tr.q_target[i], tr.q_measured[i], tr.tau[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Steps needed per control period; errors unless it is a whole multiple.
pub fn substeps_per_tick(physics_dt: f64, control_dt: f64) -> Result<usize, PlantError> {
    if !(control_dt > 0.0) {
        return Err(PlantError::BadTiming(format!("control_dt = {control_dt}")));
    }
    let ratio = control_dt / physics_dt;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-6 * n {
        return Err(PlantError::BadTiming(format!(
            "control_dt {control_dt} is not a multiple of physics_dt {physics_dt}"
        )));
    }
    Ok(n as usize)
}

/// Simulates the plant tracking `reference` for `duration` seconds.
///
/// Targets are sampled every `control_dt` and held across physics substeps.
/// The velocity target is the backward difference of consecutive sampled
/// targets, zero at the first tick. The plant starts at rest on the
/// reference's initial value unless `initial` is given. One sample is
/// recorded per physics step, before the step.
pub fn run_episode(
    plant: &PlantModel,
    gains: &GainSchedule,
    reference: &dyn Reference,
    duration: f64,
    control_dt: f64,
    initial: Option<&[JointState]>,
) -> Result<Episode, PlantError> {
    plant.validate()?;
    gains.validate()?;
    let n = plant.dof();
    if gains.len() != n {
        return Err(PlantError::DimensionMismatch {
            expected: n,
            got: gains.len(),
        });
    }
    if !(duration > 0.0) {
        return Err(PlantError::BadTiming(format!("duration = {duration}")));
    }
    let dt = plant.physics_dt;
    let sub = substeps_per_tick(dt, control_dt)?;
    let steps = (duration / dt).round() as usize;

    let mut q_ref = vec![0.0; n];
    reference.sample(0.0, &mut q_ref);
    let mut states: Vec<JointState> = match initial {
        Some(s) if s.len() == n => s.to_vec(),
        Some(s) => {
            return Err(PlantError::DimensionMismatch {
                expected: n,
                got: s.len(),
            })
        }
        None => q_ref.iter().map(|&q| JointState::at_rest(q)).collect(),
    };

    let mut episode = Episode {
        physics_dt: dt,
        control_dt,
        t: Vec::with_capacity(steps),
        joints: vec![
            JointTrace {
                q_target: Vec::with_capacity(steps),
                qdot_target: Vec::with_capacity(steps),
                q_reference: Vec::with_capacity(steps),
                q_measured: Vec::with_capacity(steps),
                q_filtered: Vec::with_capacity(steps),
                tau: Vec::with_capacity(steps),
            };
            n
        ],
    };
    let mut targets = ControlTargets::hold(vec![0.0; n], control_dt);
    let mut previous: Option<Vec<f64>> = None;

    for k in 0..steps {
        let t = k as f64 * dt;
        reference.sample(t, &mut q_ref);
        if k % sub == 0 {
            targets.q_t.copy_from_slice(&q_ref);
            match &previous {
                Some(prev) => {
                    for j in 0..n {
                        targets.qdot_t[j] = (q_ref[j] - prev[j]) / control_dt;
                    }
                }
                None => targets.qdot_t.iter_mut().for_each(|v| *v = 0.0),
            }
            previous = Some(q_ref.clone());
        }
        episode.t.push(t);
        for (j, tr) in episode.joints.iter_mut().enumerate() {
            tr.q_target.push(targets.q_t[j]);
            tr.qdot_target.push(targets.qdot_t[j]);
            tr.q_reference.push(q_ref[j]);
            tr.q_measured.push(states[j].q);
            tr.q_filtered.push(states[j].filtered_q);
        }
        step(plant, &mut states, &targets, gains, t)?;
        for (j, tr) in episode.joints.iter_mut().enumerate() {
            tr.tau.push(states[j].tau_applied);
        }
    }
    Ok(episode)
}

/// Per-control-interval overshoot of `joint` past its held target.
///
/// For each interval with a non-zero velocity target, the largest value of
/// `sign(qdot_t) * (q - q_t)`. Positive entries mean the joint ran ahead of
/// the command it was holding. Intervals with a zero velocity target are
/// skipped.
pub fn interval_overshoot(episode: &Episode, joint: usize) -> Vec<f64> {
    let tr = &episode.joints[joint];
    let sub = episode.substeps().max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start + sub <= episode.len() {
        let direction = tr.qdot_target[start].signum();
        if tr.qdot_target[start] != 0.0 {
            // the sample after the interval closes it: q at the end of the hold
            let end = (start + sub + 1).min(episode.len());
            let worst = (start..end)
                .map(|i| direction * (tr.q_measured[i] - tr.q_target[start]))
                .fold(f64::NEG_INFINITY, f64::max);
            out.push(worst);
        }
        start += sub;
    }
    out
}
