//! Simulation and control library for autonomous diffuse reflectance
//! spectroscopy (DRS) scanning.
//!
//! A probe carrying a DRS fibre is servoed onto tissue from a third-person
//! camera view, brought into standard contact by a height compensator, and
//! scanned along a line drawn on the image. The crate provides:
//!
//! * [`scene`]: probe kinematics, tissue heightfield and pinhole cameras.
//! * [`perception`]: synthetic feature and contact-height sensors plus the
//!   constant-velocity Kalman tracks that smooth them.
//! * [`jacobian`]: offline inverse image Jacobian estimation (GMM clustering
//!   with local least squares), with analytic and k-means baselines.
//! * [`control`]: the blended visual-servoing / height-compensation
//!   controller and the approach/scan state machine.
//! * [`spectro`]: spectrum synthesis, calibration, smoothing, cropping and
//!   the intensity/fingerprint decomposition.
//! * [`eval`]: trajectory and spectral consistency metrics, the simulated
//!   manual operator, reports and plots.
//! * [`cli`]: config-driven experiment commands behind the `drs-scan` binary.

pub mod cli;
pub mod control;
mod error;
pub mod eval;
pub mod jacobian;
pub mod perception;
mod preset;
pub mod rng;
pub mod scene;
pub mod spectro;

pub use error::{Error, Result};
pub use preset::SamplePreset;
