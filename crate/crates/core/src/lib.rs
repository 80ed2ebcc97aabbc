//! Control-theoretic core of a low-latency humanoid teleoperation stack.
//!
//! - [`se3`]: rigid-body pose algebra
//! - [`mapping`]: one-shot calibration and per-frame Cartesian mapping
//! - [`plant`]: joint dynamics under PD + velocity feedforward, and its
//!   closed-form frequency analysis
//! - [`impedance`]: oscillation-based effective inertia estimation and gain
//!   synthesis
//! - [`latency`]: optical-flow / signal based end-to-end lag estimation
//! - [`pipeline`]: streaming harness with latest-value transport and latency
//!   budget accounting
//! - [`experiments`]: composed studies (delay curves) shared by the CLI and demo

pub mod se3;
pub mod mapping;
pub mod plant;
pub mod impedance;
pub mod latency;
pub mod pipeline;
pub mod experiments;
