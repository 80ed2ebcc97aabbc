//! Effective-impedance calibration.
//!
//! Each joint is released from a small offset with its derivative gain
//! removed while every other joint stays under closed-loop PD. The free
//! oscillation period gives the inertia the joint actually sees,
//! `M_eff = kp P^2 / (2 pi)^2`, averaged over environments with randomized
//! `kp`. Gains are then resynthesized as `kp = M wn^2`, `kd = 2 zeta M wn`.
//! Joints are processed from the tip of the chain toward the base.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{self, ControlTargets, GainSchedule, JointGains, JointState, PlantError, PlantModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("joint {joint}: only {crossings} zero crossings in the window, no oscillation to measure")]
    NoOscillation { joint: usize, crossings: usize },
    #[error("invalid calibration config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// rad/s
    pub omega_n: f64,
    pub zeta: f64,
    pub n_envs: usize,
    /// Multiplicative bounds for the per-environment `kp`.
    pub kp_sample_range: (f64, f64),
    /// Release offset, rad.
    pub perturbation: f64,
    /// Longest simulated time per measurement, s.
    pub measure_window: f64,
    pub sweeps: usize,
    /// Largest relative `kp` change across a sweep that counts as converged.
    pub convergence_tol: f64,
    /// Environments whose averaged cycles differ by more than this fraction
    /// of their mean are left out of the inertia average.
    pub max_cycle_spread: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            omega_n: 10.0,
            zeta: 1.0,
            n_envs: 16,
            kp_sample_range: (0.5, 1.5),
            perturbation: 0.05,
            measure_window: 10.0,
            sweeps: 3,
            convergence_tol: 0.02,
            max_cycle_spread: 0.15,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), CalibError> {
        let (lo, hi) = self.kp_sample_range;
        let bad = |m: String| Err(CalibError::InvalidConfig(m));
        if self.n_envs < 2 {
            return bad(format!("need at least 2 environments, got {}", self.n_envs));
        }
        if !(self.perturbation > 0.0) {
            return bad(format!("perturbation {} must be positive", self.perturbation));
        }
        if !(0.5 <= lo && lo <= hi && hi <= 1.5) {
            return bad(format!("kp sample range ({lo}, {hi}) must lie within [0.5, 1.5]"));
        }
        if !(self.omega_n >= 0.0) || !(self.zeta >= 0.0) {
            return bad("omega_n and zeta must be non-negative".into());
        }
        if !(self.max_cycle_spread > 0.0) {
            return bad(format!("max_cycle_spread {} must be positive", self.max_cycle_spread));
        }
        if !(self.measure_window > 0.0) || self.sweeps == 0 {
            return bad("measure_window and sweeps must be positive".into());
        }
        Ok(())
    }
}

/// `M_eff = kp P^2 / (2 pi)^2`.
pub fn estimate_meff(kp: f64, period: f64) -> f64 {
    kp * period * period / (std::f64::consts::TAU * std::f64::consts::TAU)
}

/// `(kp, kd) = (M wn^2, 2 zeta M wn)`.
pub fn update_gains(m_eff: f64, omega_n: f64, zeta: f64) -> (f64, f64) {
    (m_eff * omega_n * omega_n, 2.0 * zeta * m_eff * omega_n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodMeasurement {
    /// s
    pub period: f64,
    /// Full cycles averaged.
    pub cycles: usize,
    /// `(max - min) / mean` of the averaged cycle lengths.
    pub cycle_spread: f64,
    /// Crossing times of `q - q0` in the down-going direction first, s.
    pub crossings: Vec<f64>,
}

const SKIP_CYCLES: usize = 1;
const AVERAGE_CYCLES: usize = 5;

/// Free-oscillation period of `joint` released from rest at `dq` off its
/// target.
///
/// All joints hold a target of zero. The target joint's `kd` is zeroed here;
/// the others keep their gains. Simulation stops once enough crossings are
/// seen or after `window` seconds.
pub fn measure_period(
    plant: &PlantModel,
    gains: &GainSchedule,
    joint: usize,
    dq: f64,
    window: f64,
) -> Result<PeriodMeasurement, CalibError> {
    plant.validate()?;
    let n = plant.dof();
    if gains.len() != n {
        return Err(PlantError::DimensionMismatch { expected: n, got: gains.len() }.into());
    }
    if joint >= n {
        return Err(CalibError::InvalidConfig(format!("joint {joint} out of range for {n} joints")));
    }
    let mut gains = gains.clone();
    gains.joints[joint].kd = 0.0;
    gains.validate()?;

    let q0 = vec![0.0; n];
    let targets = ControlTargets::hold(q0.clone(), plant.physics_dt);
    let mut states: Vec<JointState> = q0.iter().map(|&q| JointState::at_rest(q)).collect();
    states[joint] = JointState::at_rest(q0[joint] + dq);

    let wanted = 2 * (SKIP_CYCLES + AVERAGE_CYCLES) + 1;
    let dt = plant.physics_dt;
    let steps = (window / dt).ceil() as usize;
    let mut crossings = Vec::new();
    let mut prev = dq;
    for k in 0..steps {
        let t = k as f64 * dt;
        plant::step(plant, &mut states, &targets, &gains, t)?;
        let x = states[joint].q - q0[joint];
        if (prev > 0.0 && x <= 0.0) || (prev < 0.0 && x >= 0.0) {
            // linear interpolation inside the step
            let frac = if prev != x { prev / (prev - x) } else { 0.0 };
            crossings.push(t + frac * dt);
            if crossings.len() >= wanted {
                break;
            }
        }
        if x != 0.0 {
            prev = x;
        }
    }

    if crossings.len() < 3 {
        return Err(CalibError::NoOscillation { joint, crossings: crossings.len() });
    }
    // same-direction crossings are two apart
    let cycles: Vec<f64> = (0..(crossings.len() - 1) / 2)
        .map(|k| crossings[2 * k + 2] - crossings[2 * k])
        .collect();
    let skip = if cycles.len() > SKIP_CYCLES { SKIP_CYCLES } else { 0 };
    let used = &cycles[skip..(skip + AVERAGE_CYCLES).min(cycles.len())];
    let period = used.iter().sum::<f64>() / used.len() as f64;
    let (lo, hi) = used.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    Ok(PeriodMeasurement {
        period,
        cycles: used.len(),
        cycle_spread: (hi - lo) / period,
        crossings,
    })
}

/// Calibration outcome for one joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceEstimate {
    pub joint: usize,
    /// N m / rad, one per environment
    pub kp_samples: Vec<f64>,
    /// s; `None` where no oscillation was found
    pub periods: Vec<Option<f64>>,
    /// kg m^2
    pub m_eff_samples: Vec<Option<f64>>,
    /// Whether each environment entered the average. Rejected ones had no
    /// usable oscillation or cycles too uneven to trust.
    pub accepted: Vec<bool>,
    /// kg m^2, mean over accepted environments
    pub m_eff_mean: f64,
    pub kp: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
    pub m_eff: Vec<f64>,
    pub max_relative_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub gains: GainSchedule,
    /// Indexed by joint, from the last sweep.
    pub estimates: Vec<ImpedanceEstimate>,
    pub history: Vec<SweepRecord>,
    pub order: Vec<usize>,
    /// False when the last sweep still changed some `kp` by more than the
    /// tolerance; the gains are then the best available estimate.
    pub converged: bool,
}

/// Joint indices from the tip toward the base; ties go to the lower index.
pub fn distal_to_proximal(plant: &PlantModel) -> Vec<usize> {
    let mut order: Vec<usize> = (0..plant.dof()).collect();
    order.sort_by_key(|&j| (std::cmp::Reverse(plant.depth(j)), j));
    order
}

fn env_rng(seed: u64, sweep: usize, joint: usize, env: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((sweep as u64) << 40) | ((joint as u64) << 20) | env as u64);
    rng
}

/// Per-environment `kp` multipliers: environment `e` draws uniformly from
/// the `e`-th of `n` equal slices of `[lo, hi]`, so each draw is uniform over
/// the whole range once the environment index is forgotten, and the set
/// covers it evenly.
fn kp_multipliers(config: &CalibrationConfig, seed: u64, sweep: usize, joint: usize) -> Vec<f64> {
    let (lo, hi) = config.kp_sample_range;
    let n = config.n_envs;
    (0..n)
        .map(|e| {
            let u: f64 = env_rng(seed, sweep, joint, e).random();
            lo + (hi - lo) * (e as f64 + u) / n as f64
        })
        .collect()
}

fn measure_envs(
    plant: &PlantModel,
    gains: &GainSchedule,
    joint: usize,
    kp_samples: &[f64],
    config: &CalibrationConfig,
) -> Result<Vec<Option<PeriodMeasurement>>, CalibError> {
    let one = |kp: &f64| {
        let mut g = gains.clone();
        g.joints[joint].kp = *kp;
        match measure_period(plant, &g, joint, config.perturbation, config.measure_window) {
            Ok(m) => Ok(Some(m)),
            Err(CalibError::NoOscillation { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        kp_samples.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        kp_samples.iter().map(one).collect()
    }
}

/// Calibrates one joint against the current schedule.
///
/// Fails with `NoOscillation` only when no environment produced a usable
/// period.
pub fn calibrate_joint(
    plant: &PlantModel,
    gains: &GainSchedule,
    joint: usize,
    config: &CalibrationConfig,
    seed: u64,
    sweep: usize,
) -> Result<ImpedanceEstimate, CalibError> {
    let nominal = gains.joints[joint].kp;
    let kp_samples: Vec<f64> = kp_multipliers(config, seed, sweep, joint)
        .into_iter()
        .map(|m| m * nominal)
        .collect();
    let measured = measure_envs(plant, gains, joint, &kp_samples, config)?;
    let periods: Vec<Option<f64>> = measured.iter().map(|m| m.as_ref().map(|m| m.period)).collect();
    let accepted: Vec<bool> = measured
        .iter()
        .map(|m| m.as_ref().is_some_and(|m| m.cycle_spread <= config.max_cycle_spread))
        .collect();
    let m_eff_samples: Vec<Option<f64>> = kp_samples
        .iter()
        .zip(&periods)
        .map(|(&k, p)| p.map(|p| estimate_meff(k, p)))
        .collect();
    let kept: Vec<f64> = m_eff_samples
        .iter()
        .zip(&accepted)
        .filter_map(|(m, &a)| if a { *m } else { None })
        .collect();
    if kept.is_empty() {
        let crossings = measured.iter().flatten().map(|m| m.crossings.len()).max().unwrap_or(0);
        return Err(CalibError::NoOscillation { joint, crossings });
    }
    let m_eff_mean = kept.iter().sum::<f64>() / kept.len() as f64;
    let (kp, kd) = update_gains(m_eff_mean, config.omega_n, config.zeta);
    Ok(ImpedanceEstimate {
        joint,
        kp_samples,
        periods,
        m_eff_samples,
        accepted,
        m_eff_mean,
        kp,
        kd,
    })
}

/// Sequential distal-to-proximal calibration, repeated until the gains
/// settle or `config.sweeps` sweeps have run.
pub fn calibrate_chain(
    plant: &PlantModel,
    config: &CalibrationConfig,
    initial: &GainSchedule,
    seed: u64,
) -> Result<CalibrationResult, CalibError> {
    config.validate()?;
    plant.validate()?;
    let n = plant.dof();
    if initial.len() != n {
        return Err(PlantError::DimensionMismatch { expected: n, got: initial.len() }.into());
    }
    if initial.joints.iter().any(|g| !(g.kp > 0.0)) {
        return Err(CalibError::InvalidConfig("initial kp must be positive".into()));
    }
    initial.validate()?;

    let order = distal_to_proximal(plant);
    let mut gains = initial.clone();
    let mut estimates: Vec<Option<ImpedanceEstimate>> = vec![None; n];
    let mut history = Vec::new();
    let mut converged = false;

    for sweep in 0..config.sweeps {
        let before: Vec<f64> = gains.joints.iter().map(|g| g.kp).collect();
        for &j in &order {
            let est = calibrate_joint(plant, &gains, j, config, seed, sweep)?;
            let g = &mut gains.joints[j];
            g.kp = est.kp;
            g.kd = est.kd;
            g.omega_n = config.omega_n;
            g.zeta = config.zeta;
            estimates[j] = Some(est);
        }
        let change = gains
            .joints
            .iter()
            .zip(&before)
            .map(|(g, &b)| ((g.kp - b) / b).abs())
            .fold(0.0, f64::max);
        history.push(SweepRecord {
            sweep,
            kp: gains.joints.iter().map(|g| g.kp).collect(),
            kd: gains.joints.iter().map(|g| g.kd).collect(),
            m_eff: estimates.iter().map(|e| e.as_ref().map_or(0.0, |e| e.m_eff_mean)).collect(),
            max_relative_change: change,
        });
        if change < config.convergence_tol {
            converged = true;
            break;
        }
    }

    Ok(CalibrationResult {
        gains,
        estimates: estimates.into_iter().map(|e| e.expect("every joint is visited each sweep")).collect(),
        history,
        order,
        converged,
    })
}

/// Random starting gains: per joint, the plant's nominal inertia scaled by a
/// log-uniform factor in `[1 / spread, spread]`, synthesized at the target
/// `omega_n` and `zeta`.
pub fn random_initial_gains(plant: &PlantModel, config: &CalibrationConfig, spread: f64, seed: u64) -> GainSchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = spread.max(1.0).ln();
    GainSchedule::new(
        plant
            .nominal_inertia()
            .into_iter()
            .map(|m| {
                let factor = if span > 0.0 { rng.random_range(-span..=span).exp() } else { 1.0 };
                JointGains::from_impedance(m * factor, config.omega_n, config.zeta, 0.0)
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::LinkParams;
    use std::f64::consts::{PI, TAU};

    fn schedule(kps: &[f64]) -> GainSchedule {
        GainSchedule::new(kps.iter().map(|&k| JointGains::pd(k, 0.0)).collect())
    }

    #[test]
    fn harmonic_oscillator_periods() {
        let plant = PlantModel::decoupled(vec![2.0]);
        let p = measure_period(&plant, &schedule(&[8.0]), 0, 0.05, 10.0).unwrap();
        assert!((p.period - PI).abs() < 1e-3, "{}", p.period);
        // six crossings in 10 s: two full cycles, the first skipped
        assert_eq!(p.cycles, 1);
        let long = measure_period(&plant, &schedule(&[8.0]), 0, 0.05, 30.0).unwrap();
        assert_eq!(long.cycles, 5);
        assert_eq!(long.crossings.len(), 13);
        let p = measure_period(&plant, &schedule(&[2.0]), 0, 0.05, 20.0).unwrap();
        assert!((p.period - TAU).abs() < 2e-3, "{}", p.period);
    }

    #[test]
    fn target_damping_is_removed() {
        let plant = PlantModel::decoupled(vec![2.0]);
        let damped = GainSchedule::new(vec![JointGains::pd(8.0, 8.0)]);
        let p = measure_period(&plant, &damped, 0, 0.05, 10.0).unwrap();
        assert!((p.period - PI).abs() < 1e-3);
    }

    #[test]
    fn overdamped_coupling_reports_no_oscillation() {
        let plant = PlantModel::decoupled(vec![2.0]);
        // period 2 pi sqrt(2 / 0.02) ~ 63 s, far outside the window
        let err = measure_period(&plant, &schedule(&[0.02]), 0, 0.05, 10.0).unwrap_err();
        assert!(matches!(err, CalibError::NoOscillation { joint: 0, .. }));
    }

    #[test]
    fn meff_examples() {
        assert!((estimate_meff(8.0, PI) - 2.0).abs() < 1e-12);
        assert!((estimate_meff(4.0 * PI * PI, 1.0) - 1.0).abs() < 1e-12);
        assert!((estimate_meff(100.0, 0.2) - 0.1013).abs() < 1e-4);
    }

    #[test]
    fn gain_synthesis() {
        assert_eq!(update_gains(1.0, 10.0, 1.0), (100.0, 20.0));
        assert_eq!(update_gains(1.7, 0.0, 1.0), (0.0, 0.0));
        let (kp1, kd1) = update_gains(0.37, 7.0, 0.8);
        let (kp2, kd2) = update_gains(0.37, 14.0, 0.8);
        assert!((kp2 / kp1 - 4.0).abs() < 1e-12 && (kd2 / kd1 - 2.0).abs() < 1e-12);
        // identities hold bit-exactly for the stored gains
        let m = 0.123_456_7;
        let (kp, kd) = update_gains(m, 10.0, 1.0);
        assert_eq!(kp, m * 10.0 * 10.0);
        assert_eq!(kd, 2.0 * 1.0 * m * 10.0);
    }

    #[test]
    fn estimator_consistent_over_two_decades() {
        let plant = PlantModel::decoupled(vec![1.0]);
        for kp in [4.0, 10.0, 40.0, 100.0, 400.0] {
            let p = measure_period(&plant, &schedule(&[kp]), 0, 0.05, 10.0).unwrap();
            let m = estimate_meff(kp, p.period);
            assert!((m - 1.0).abs() < 0.02, "kp {kp}: {m}");
        }
    }

    #[test]
    fn order_is_distal_first() {
        let chain = PlantModel::planar_chain(vec![LinkParams::rod(1.0, 0.3); 4]);
        assert_eq!(distal_to_proximal(&chain), vec![3, 2, 1, 0]);
        let flat = PlantModel::decoupled(vec![1.0, 2.0, 3.0]);
        assert_eq!(distal_to_proximal(&flat), vec![0, 1, 2]);
    }

    #[test]
    fn stiff_proximal_isolates_distal_link() {
        let links = vec![LinkParams::rod(2.0, 0.5), LinkParams::rod(1.0, 0.4)];
        let plant = PlantModel::planar_chain(links.clone());
        let kp = 4.0;
        let gains = GainSchedule::new(vec![JointGains::from_impedance(1.0, 40.0, 1.0, 0.0), JointGains::pd(kp, 0.0)]);
        let p = measure_period(&plant, &gains, 1, 0.05, 10.0).unwrap().period;
        let expected = TAU * (links[1].pivot_inertia() / kp).sqrt();
        assert!((p - expected).abs() / expected < 0.05, "{p} vs {expected}");
    }

    #[test]
    fn stratified_draws_cover_range() {
        let cfg = CalibrationConfig::default();
        let m = kp_multipliers(&cfg, 7, 0, 0);
        assert_eq!(m.len(), 16);
        for (e, v) in m.iter().enumerate() {
            let lo = 0.5 + e as f64 / 16.0;
            assert!(*v >= lo && *v < lo + 1.0 / 16.0);
        }
        assert_eq!(m, kp_multipliers(&cfg, 7, 0, 0));
        assert_ne!(m, kp_multipliers(&cfg, 8, 0, 0));
    }

    #[test]
    fn recovers_known_masses() {
        let plant = PlantModel::decoupled(vec![1.0, 2.0, 3.0]);
        let cfg = CalibrationConfig::default();
        for seed in [1, 2] {
            let init = random_initial_gains(&plant, &cfg, 5.0, seed);
            let res = calibrate_chain(&plant, &cfg, &init, 7).unwrap();
            for (j, m) in [1.0, 2.0, 3.0].iter().enumerate() {
                let est = &res.estimates[j];
                assert!((est.m_eff_mean - m).abs() / m < 0.02, "joint {j}: {}", est.m_eff_mean);
                assert!((res.gains.joints[j].kp - m * 100.0).abs() / (m * 100.0) < 0.04);
            }
            assert!(res.converged);
        }
    }

    #[test]
    fn omega_scaling_of_kp() {
        let plant = PlantModel::decoupled(vec![1.5]);
        let init = schedule(&[30.0]);
        let mut cfg = CalibrationConfig::default();
        let a = calibrate_chain(&plant, &cfg, &init, 3).unwrap();
        cfg.omega_n = 15.0;
        let b = calibrate_chain(&plant, &cfg, &init, 3).unwrap();
        let ratio = b.gains.joints[0].kp / a.gains.joints[0].kp;
        assert!((ratio - 2.25).abs() < 1e-3, "{ratio}");
    }

    #[test]
    fn config_validation() {
        let mut c = CalibrationConfig::default();
        assert!(c.validate().is_ok());
        c.n_envs = 1;
        assert!(c.validate().is_err());
        c = CalibrationConfig { kp_sample_range: (0.4, 1.5), ..Default::default() };
        assert!(c.validate().is_err());
        c = CalibrationConfig { perturbation: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
