//! wasm bindings for `www/index.html`. Every export returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use extremctl_core::experiments::{delay_curve, parse_etas, DelayCurveConfig, DelayPoint};
use extremctl_core::latency::synth::{reciprocating, BarScene};
use extremctl_core::latency::{estimate_lag, flow_sequence, flow_signal, FlowParams, LagEstimate};
use extremctl_core::plant::analysis::{equivalent_delay, frequency_response, max_feedforward_ratio};
use extremctl_core::plant::JointGains;

#[derive(Debug, Serialize)]
pub struct DelayCurve {
    pub points: Vec<DelayPoint>,
    /// Largest ratio that keeps the sampled loop from overshooting.
    pub eta_bound: f64,
}

pub fn delay_curve_data(omega_n: f64, zeta: f64, omega: f64, control_dt: f64, etas: &str) -> Result<DelayCurve, String> {
    let etas = parse_etas(etas)?;
    let config = DelayCurveConfig {
        omega_n,
        zeta,
        omega,
        control_dt,
        duration: 8.0,
        ..Default::default()
    };
    let points = delay_curve(&config, &etas).map_err(|e| e.to_string())?;
    let eta_bound = max_feedforward_ratio(omega_n, control_dt).map_err(|e| e.to_string())?;
    Ok(DelayCurve { points, eta_bound })
}

#[derive(Debug, Serialize)]
pub struct Bode {
    /// rad/s, log spaced.
    pub omega: Vec<f64>,
    pub magnitude_db: Vec<f64>,
    pub phase_deg: Vec<f64>,
    pub delay_ms: Vec<f64>,
    pub equivalent_delay_ms: f64,
}

pub fn bode_data(omega_n: f64, zeta: f64, eta: f64, points: usize) -> Result<Bode, String> {
    if !(omega_n > 0.0 && zeta > 0.0 && points >= 2) {
        return Err("need omega_n > 0, zeta > 0 and at least two points".into());
    }
    let gains = JointGains::from_impedance(1.0, omega_n, zeta, eta);
    let (lo, hi) = ((omega_n / 100.0).ln(), (omega_n * 10.0).ln());
    let omega: Vec<f64> = (0..points)
        .map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp())
        .collect();
    let fr: Vec<_> = omega.iter().map(|&w| frequency_response(&gains, w)).collect();
    Ok(Bode {
        magnitude_db: fr.iter().map(|r| 20.0 * r.magnitude.log10()).collect(),
        phase_deg: fr.iter().map(|r| r.phase.to_degrees()).collect(),
        delay_ms: fr.iter().zip(&omega).map(|(r, &w)| r.delay(w) * 1e3).collect(),
        equivalent_delay_ms: equivalent_delay(&gains) * 1e3,
        omega,
    })
}

#[derive(Debug, Serialize)]
pub struct Alignment {
    pub fps: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub estimate: LagEstimate,
}

/// Two synthetic recordings of the same reciprocating bar, the second
/// `delay_ms` late. With `from_flow` the motion signals come from block
/// matching on rendered frames, otherwise from the exact bar position.
pub fn alignment_data(delay_ms: f64, fps: f64, frames: usize, from_flow: bool) -> Result<Alignment, String> {
    if !(fps > 0.0 && frames >= 2) {
        return Err("need fps > 0 and at least two frames".into());
    }
    let scene = BarScene::front_view();
    let delay = delay_ms * 1e-3;
    let (a, b) = if from_flow {
        let region = scene.region();
        let params = FlowParams::default();
        let signal = |d: f64| {
            let rendered = scene.render_sequence(&reciprocating, fps, frames, d);
            let flows = flow_sequence(&rendered, &params).map_err(|e| e.to_string())?;
            flow_signal(&flows, &region, fps).map_err(|e| e.to_string())
        };
        (signal(0.0)?, signal(delay)?)
    } else {
        (
            scene.tracked_position(&reciprocating, fps, frames, 0.0),
            scene.tracked_position(&reciprocating, fps, frames, delay),
        )
    };
    let estimate = estimate_lag(&a, &b, 0.5).map_err(|e| e.to_string())?;
    Ok(Alignment {
        fps,
        a: a.samples,
        b: b.samples,
        estimate,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = delayCurve)]
pub fn delay_curve_js(omega_n: f64, zeta: f64, omega: f64, control_dt: f64, etas: &str) -> Result<String, JsError> {
    to_js(delay_curve_data(omega_n, zeta, omega, control_dt, etas))
}

#[wasm_bindgen(js_name = bode)]
pub fn bode_js(omega_n: f64, zeta: f64, eta: f64, points: usize) -> Result<String, JsError> {
    to_js(bode_data(omega_n, zeta, eta, points))
}

#[wasm_bindgen(js_name = alignment)]
pub fn alignment_js(delay_ms: f64, fps: f64, frames: usize, from_flow: bool) -> Result<String, JsError> {
    to_js(alignment_data(delay_ms, fps, frames, from_flow))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_spans_the_etas() {
        let c = delay_curve_data(10.0, 1.0, 3.14, 0.02, "0,0.5").unwrap();
        assert_eq!(c.points.len(), 2);
        assert!(c.points[0].simulated_ms > c.points[1].simulated_ms);
        assert!((c.eta_bound - 0.95).abs() < 1e-9);
        assert!(delay_curve_data(10.0, 1.0, 3.14, 0.02, "x").is_err());
    }

    #[test]
    fn bode_low_frequency_delay() {
        let b = bode_data(10.0, 1.0, 0.0, 50).unwrap();
        assert_eq!(b.omega.len(), 50);
        assert!(b.magnitude_db[0].abs() < 0.01);
        assert!((b.delay_ms[0] - b.equivalent_delay_ms).abs() < 1.0);
    }

    #[test]
    fn alignment_recovers_delay() {
        let a = alignment_data(50.0, 60.0, 180, false).unwrap();
        assert!((a.estimate.lag * 1e3 - 50.0).abs() < 1e3 / 60.0);
        let f = alignment_data(4e3 / 60.0, 60.0, 180, true).unwrap();
        assert!((f.estimate.lag * 1e3 - 66.7).abs() <= 8.3);
    }
}
