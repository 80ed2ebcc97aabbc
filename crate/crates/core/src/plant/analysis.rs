//! Closed-form behavior of the PD + velocity feedforward loop on `M qddot = tau`.
//!
//! With gains synthesized as `kp = M wn^2`, `kd = 2 zeta M wn`, the transfer
//! function from target to realized position is
//!
//! ```text
//!          wn^2 + 2 eta zeta wn s
//! H(s) = ---------------------------
//!        s^2 + 2 zeta wn s + wn^2
//! ```

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use super::{JointGains, PlantError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    pub magnitude: f64,
    /// rad, continuous through `omega = omega_n`
    pub phase: f64,
}

impl FrequencyResponse {
    /// Phase lag expressed as a time delay at `omega`, s.
    pub fn delay(&self, omega: f64) -> f64 {
        -self.phase / omega
    }
}

fn h(gains: &JointGains, omega: f64) -> Complex<f64> {
    let (wn, z, eta) = (gains.omega_n, gains.zeta, gains.effective_eta());
    let s = Complex::new(0.0, omega);
    (Complex::from(wn * wn) + s * (2.0 * eta * z * wn)) / (s * s + s * (2.0 * z * wn) + wn * wn)
}

/// `|H(j omega)|` and its phase.
///
/// The phase is `atan(2 eta zeta r) - atan2(2 zeta r, 1 - r^2)` with
/// `r = omega / omega_n`; the second term uses `atan2` so it stays continuous
/// across resonance instead of jumping by `pi`.
pub fn frequency_response(gains: &JointGains, omega: f64) -> FrequencyResponse {
    let (wn, z, eta) = (gains.omega_n, gains.zeta, gains.effective_eta());
    let r = omega / wn;
    let phase = (2.0 * eta * z * r).atan() - (2.0 * z * r).atan2(1.0 - r * r);
    FrequencyResponse {
        magnitude: h(gains, omega).norm(),
        phase,
    }
}

/// Low-frequency tracking delay `2 zeta (1 - eta) / omega_n`, s.
pub fn equivalent_delay(gains: &JointGains) -> f64 {
    2.0 * gains.zeta * (1.0 - gains.effective_eta()) / gains.omega_n
}

/// Largest feedforward ratio that avoids extra acceleration within one held
/// control interval: `1 - omega_n dt / 4`.
pub fn max_feedforward_ratio(omega_n: f64, control_dt: f64) -> Result<f64, PlantError> {
    let x = omega_n * control_dt;
    if !(x < 4.0) {
        return Err(PlantError::Infeasible(x));
    }
    Ok(1.0 - x / 4.0)
}
