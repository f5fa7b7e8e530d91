//! The hybrid controller: image-based visual servoing on an inverse image
//! Jacobian, PID height compensation, their exponential blend, and the
//! approach/scan state machine that follows a line drawn on the image.

mod blend;
mod config;
mod controller;
pub mod log;
mod pid;
mod trial;

pub use blend::{blend, blend_weight, ActionPair};
pub use config::{ControlConfig, ScanCommand};
pub use controller::{
    approach_step, ibvs_velocity, scanning_step, ControllerState, FailureReason, Observation, Stage,
};
pub use log::{TickRecord, TrialLog, TrialSummary};
pub use pid::{height_action, Pid, PidGains};
pub use trial::{run_trial, SensorSuite, StartPolicy, TrialSpec};
