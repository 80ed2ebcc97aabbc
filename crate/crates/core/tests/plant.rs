use extremctl_core::latency::{estimate_lag, MotionSignal};
use extremctl_core::plant::analysis::{equivalent_delay, frequency_response};
use extremctl_core::plant::*;

fn single() -> PlantModel {
    PlantModel::decoupled(vec![1.0])
}

fn gains(omega_n: f64, eta: f64) -> GainSchedule {
    GainSchedule::new(vec![JointGains::from_impedance(1.0, omega_n, 1.0, eta)])
}

/// Lag of the joint behind the continuous reference, s.
fn measured_delay(omega_n: f64, eta: f64, omega: f64, control_dt: f64, duration: f64) -> f64 {
    let ep = run_episode(
        &single(),
        &gains(omega_n, eta),
        &Signal::Sine { amplitude: 0.3, omega },
        duration,
        control_dt,
        None,
    )
    .unwrap();
    let skip = 2000;
    let tr = &ep.joints[0];
    let sig = |v: &[f64]| MotionSignal::new(v[skip..].to_vec(), 1000.0, ep.t[skip]).unwrap();
    // under half a period so the peak cannot alias onto a neighbouring cycle
    let max_lag = (0.45 * std::f64::consts::TAU / omega).min(1.0);
    estimate_lag(&sig(&tr.q_reference), &sig(&tr.q_measured), max_lag).unwrap().lag
}

#[test]
fn sinusoid_delay_without_feedforward() {
    let d = measured_delay(10.0, 0.0, 3.14, 0.02, 12.0);
    assert!((d - 0.200).abs() <= 0.025, "{d}");
}

#[test]
fn sinusoid_delay_with_feedforward_includes_hold_bias() {
    let g = JointGains::from_impedance(1.0, 10.0, 1.0, 0.9);
    let expected = equivalent_delay(&g) + 0.01;
    let d = measured_delay(10.0, 0.9, 3.14, 0.02, 12.0);
    assert!((d - expected).abs() <= 0.015, "{d} vs {expected}");
}

#[test]
fn time_domain_delay_matches_phase() {
    for (omega_n, eta, omega) in [(10.0, 0.0, 3.0), (10.0, 0.5, 2.0), (15.0, 0.8, 5.0), (20.0, 0.3, 6.0)] {
        let g = JointGains::from_impedance(1.0, omega_n, 1.0, eta);
        let predicted = frequency_response(&g, omega).delay(omega);
        let d = measured_delay(omega_n, eta, omega, 1e-3, 14.0);
        assert!((d - predicted).abs() <= 2e-3, "wn {omega_n} eta {eta} w {omega}: {d} vs {predicted}");
    }
}

#[test]
fn overshoot_appears_only_past_the_bound() {
    let worst = |eta: f64| {
        let ep = run_episode(&single(), &gains(10.0, eta), &Signal::Ramp { rate: 1.0 }, 4.0, 0.02, None).unwrap();
        // skip the first two seconds of transient
        interval_overshoot(&ep, 0).into_iter().skip(100).fold(f64::NEG_INFINITY, f64::max)
    };
    for eta in [0.0, 0.5, 0.8, 0.9, 0.93] {
        assert!(worst(eta) <= 0.0, "eta {eta}: {}", worst(eta));
    }
    assert!(worst(1.0) > 0.0);
}
