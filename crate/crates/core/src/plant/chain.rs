//! Planar serial chain with full Lagrangian dynamics.
//!
//! Links rotate in the vertical x-y plane; gravity, when present, acts along
//! `-y`. Joint `i` is the pivot of link `i`, so joint 0 is at the base.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// kg
    pub mass: f64,
    /// Pivot-to-pivot length, m.
    pub length: f64,
    /// Pivot-to-center-of-mass distance, m. Defaults to `length / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub com: Option<f64>,
    /// Inertia about the center of mass, kg m^2. Defaults to a slender rod.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<f64>,
    /// Reflected rotor inertia on the joint axis, kg m^2.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub armature: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl LinkParams {
    pub fn rod(mass: f64, length: f64) -> Self {
        LinkParams {
            mass,
            length,
            com: None,
            inertia: None,
            armature: 0.0,
        }
    }

    pub fn with_armature(mut self, armature: f64) -> Self {
        self.armature = armature;
        self
    }

    pub fn com(&self) -> f64 {
        self.com.unwrap_or(0.5 * self.length)
    }

    pub fn inertia(&self) -> f64 {
        self.inertia
            .unwrap_or(self.mass * self.length * self.length / 12.0)
    }

    /// Inertia about the link's own pivot.
    pub fn pivot_inertia(&self) -> f64 {
        self.inertia() + self.mass * self.com().powi(2)
    }
}

fn unit(theta: f64) -> Vector2<f64> {
    Vector2::new(theta.cos(), theta.sin())
}

fn unit_perp(theta: f64) -> Vector2<f64> {
    Vector2::new(-theta.sin(), theta.cos())
}

/// Kinematic quantities shared by the dynamics terms at one configuration.
struct Kinematics {
    /// absolute link angles
    theta: Vec<f64>,
    /// absolute link angular velocities
    omega: Vec<f64>,
}

impl Kinematics {
    fn new(q: &[f64], qdot: &[f64]) -> Self {
        let mut theta = Vec::with_capacity(q.len());
        let mut omega = Vec::with_capacity(q.len());
        let (mut t, mut w) = (0.0, 0.0);
        for (a, v) in q.iter().zip(qdot) {
            t += a;
            w += v;
            theta.push(t);
            omega.push(w);
        }
        Kinematics { theta, omega }
    }
}

pub(crate) fn validate_links(links: &[LinkParams]) -> Result<(), String> {
    if links.is_empty() {
        return Err("planar chain needs at least one link".into());
    }
    for (i, l) in links.iter().enumerate() {
        if !(l.mass > 0.0) || !(l.length > 0.0) || !(l.inertia() >= 0.0) || !l.com().is_finite() || !(l.armature >= 0.0) {
            return Err(format!("link {i} has non-physical parameters {l:?}"));
        }
    }
    Ok(())
}

/// Linear-velocity Jacobian columns of link `i`'s center of mass.
fn com_jacobian(links: &[LinkParams], kin: &Kinematics, i: usize) -> Vec<Vector2<f64>> {
    let n = links.len();
    let mut cols = vec![Vector2::zeros(); n];
    // d p_ci / d q_k = sum_{k <= j < i} l_j e_perp(theta_j) + c_i e_perp(theta_i), for k <= i
    let mut acc = links[i].com() * unit_perp(kin.theta[i]);
    for k in (0..=i).rev() {
        cols[k] = acc;
        if k > 0 {
            acc += links[k - 1].length * unit_perp(kin.theta[k - 1]);
        }
    }
    cols
}

/// Center-of-mass acceleration of link `i` at zero joint acceleration.
fn com_bias_accel(links: &[LinkParams], kin: &Kinematics, i: usize) -> Vector2<f64> {
    let mut a = -links[i].com() * kin.omega[i].powi(2) * unit(kin.theta[i]);
    for j in 0..i {
        a -= links[j].length * kin.omega[j].powi(2) * unit(kin.theta[j]);
    }
    a
}

pub fn mass_matrix(links: &[LinkParams], q: &[f64]) -> DMatrix<f64> {
    let n = links.len();
    let kin = Kinematics::new(q, &vec![0.0; n]);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let jac = com_jacobian(links, &kin, i);
        let (mass, inertia) = (links[i].mass, links[i].inertia());
        for r in 0..=i {
            for c in 0..=i {
                m[(r, c)] += mass * jac[r].dot(&jac[c]) + inertia;
            }
        }
        m[(i, i)] += links[i].armature;
    }
    m
}

/// Coriolis and centrifugal torques `C(q, qdot) qdot`.
pub fn bias_torque(links: &[LinkParams], q: &[f64], qdot: &[f64]) -> DVector<f64> {
    let n = links.len();
    let kin = Kinematics::new(q, qdot);
    let mut h = DVector::zeros(n);
    for i in 0..n {
        let jac = com_jacobian(links, &kin, i);
        let a = com_bias_accel(links, &kin, i) * links[i].mass;
        for k in 0..=i {
            h[k] += jac[k].dot(&a);
        }
    }
    h
}

/// Torques that gravity `g` (m/s^2, acting along -y) exerts, as a load term.
pub fn gravity_torque(links: &[LinkParams], q: &[f64], g: f64) -> DVector<f64> {
    let n = links.len();
    let mut out = DVector::zeros(n);
    if g == 0.0 {
        return out;
    }
    let kin = Kinematics::new(q, &vec![0.0; n]);
    for i in 0..n {
        let jac = com_jacobian(links, &kin, i);
        for k in 0..=i {
            out[k] += links[i].mass * g * jac[k].y;
        }
    }
    out
}

/// Solves `M(q) qddot = tau - C qdot - G` for `qddot`.
///
/// Builds all three terms from one pass over the link Jacobians.
pub fn forward_dynamics(
    links: &[LinkParams],
    q: &[f64],
    qdot: &[f64],
    tau: &[f64],
    g: f64,
) -> Option<DVector<f64>> {
    let n = links.len();
    let kin = Kinematics::new(q, qdot);
    let mut m = DMatrix::zeros(n, n);
    let mut rhs = DVector::from_column_slice(tau);
    for i in 0..n {
        let jac = com_jacobian(links, &kin, i);
        let (mass, inertia) = (links[i].mass, links[i].inertia());
        let a = com_bias_accel(links, &kin, i) * mass;
        for r in 0..=i {
            for c in 0..=i {
                m[(r, c)] += mass * jac[r].dot(&jac[c]) + inertia;
            }
            rhs[r] -= jac[r].dot(&a) + mass * g * jac[r].y;
        }
        m[(i, i)] += links[i].armature;
    }
    m.cholesky().map(|c| c.solve(&rhs))
}

/// One classical Runge-Kutta step with `tau` held constant.
pub fn rk4_step(
    links: &[LinkParams],
    q: &[f64],
    qdot: &[f64],
    tau: &[f64],
    g: f64,
    dt: f64,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = q.len();
    let f = |q: &[f64], v: &[f64]| forward_dynamics(links, q, v, tau, g).map(|a| a.as_slice().to_vec());
    let axpy = |x: &[f64], a: f64, y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(x, y)| x + a * y).collect() };

    let a1 = f(q, qdot)?;
    let v1 = qdot.to_vec();
    let (q2, v2) = (axpy(q, 0.5 * dt, &v1), axpy(qdot, 0.5 * dt, &a1));
    let a2 = f(&q2, &v2)?;
    let (q3, v3) = (axpy(q, 0.5 * dt, &v2), axpy(qdot, 0.5 * dt, &a2));
    let a3 = f(&q3, &v3)?;
    let (q4, v4) = (axpy(q, dt, &v3), axpy(qdot, dt, &a3));
    let a4 = f(&q4, &v4)?;

    let mut q_next = vec![0.0; n];
    let mut v_next = vec![0.0; n];
    for i in 0..n {
        q_next[i] = q[i] + dt / 6.0 * (v1[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
        v_next[i] = qdot[i] + dt / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
    }
    Some((q_next, v_next))
}

pub fn kinetic_energy(links: &[LinkParams], q: &[f64], qdot: &[f64]) -> f64 {
    let v = DVector::from_column_slice(qdot);
    0.5 * (v.transpose() * mass_matrix(links, q) * &v)[(0, 0)]
}

pub fn potential_energy(links: &[LinkParams], q: &[f64], g: f64) -> f64 {
    let kin = Kinematics::new(q, &vec![0.0; q.len()]);
    let mut y = 0.0;
    let mut pe = 0.0;
    for (i, l) in links.iter().enumerate() {
        pe += l.mass * g * (y + l.com() * kin.theta[i].sin());
        y += l.length * kin.theta[i].sin();
    }
    pe
}
