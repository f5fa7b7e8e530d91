use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::blend::{blend, with_weight, ActionPair};
use super::config::{ControlConfig, ScanCommand};
use super::pid::{height_action, Pid};
use crate::error::{Error, Result};
use crate::jacobian::InverseJacobian;
use crate::perception::FeatureVector;
use crate::scene::{CartesianVelocity, Pixel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// Too many consecutive frames without a light-centre detection.
    LightCentreLost,
    OffTissue,
    OutOfImage,
    /// The inverse Jacobian could not be evaluated or was not finite.
    Estimator,
    Timeout,
}

impl FailureReason {
    pub fn tag(self) -> &'static str {
        match self {
            FailureReason::LightCentreLost => "light_centre_lost",
            FailureReason::OffTissue => "off_tissue",
            FailureReason::OutOfImage => "out_of_image",
            FailureReason::Estimator => "estimator",
            FailureReason::Timeout => "timeout",
        }
    }
}

/// Serialized as its display form, e.g. `scanning` or `failed:timeout`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Approach,
    Scanning,
    Done,
    Failed(FailureReason),
}

impl Stage {
    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Done | Stage::Failed(_))
    }

    /// Approach, then scanning, then done; failure from anywhere.
    pub fn can_become(self, next: Stage) -> bool {
        use Stage::*;
        matches!(
            (self, next),
            (Approach, Approach | Scanning | Failed(_)) | (Scanning, Scanning | Done | Failed(_)) | (Done, Done)
        ) || (matches!(self, Failed(_)) && self == next)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Approach => f.write_str("approach"),
            Stage::Scanning => f.write_str("scanning"),
            Stage::Done => f.write_str("done"),
            Stage::Failed(r) => write!(f, "failed:{}", r.tag()),
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "approach" => Stage::Approach,
            "scanning" => Stage::Scanning,
            "done" => Stage::Done,
            "failed:light_centre_lost" => Stage::Failed(FailureReason::LightCentreLost),
            "failed:off_tissue" => Stage::Failed(FailureReason::OffTissue),
            "failed:out_of_image" => Stage::Failed(FailureReason::OutOfImage),
            "failed:estimator" => Stage::Failed(FailureReason::Estimator),
            "failed:timeout" => Stage::Failed(FailureReason::Timeout),
            other => return Err(Error::Format(format!("unknown stage `{other}`"))),
        })
    }
}

impl Serialize for Stage {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Stage {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What the controller sees on one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Filtered features.
    pub features: FeatureVector,
    /// Filtered tip image velocity, px/s.
    pub tip_velocity: Vector2<f64>,
    pub h_meas: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub stage: Stage,
    /// Shared target of both features.
    pub target: Pixel,
    /// Distance of the target along the scan line, px.
    pub progress_px: f64,
    pub error: Vector4<f64>,
    pub height_pid: Pid,
    pub progress_pid: Pid,
    pub dropout_count: usize,
}

impl ControllerState {
    pub fn new(command: &ScanCommand) -> Self {
        Self {
            stage: Stage::Approach,
            target: command.start_px(),
            progress_px: 0.0,
            error: Vector4::zeros(),
            height_pid: Pid::default(),
            progress_pid: Pid::default(),
            dropout_count: 0,
        }
    }

    pub fn fail(&mut self, reason: FailureReason) {
        if !self.stage.is_terminal() {
            self.stage = Stage::Failed(reason);
        }
    }

    /// Counts a frame without a light-centre detection; fails the trial at the limit.
    pub fn record_detection(&mut self, detected: bool, limit: usize) {
        if detected {
            self.dropout_count = 0;
        } else {
            self.dropout_count += 1;
            if self.dropout_count >= limit {
                self.fail(FailureReason::LightCentreLost);
            }
        }
    }

    /// One control tick for the current stage.
    pub fn step(
        &mut self,
        obs: &Observation,
        est: &dyn InverseJacobian,
        config: &ControlConfig,
        command: &ScanCommand,
        dt: f64,
    ) -> Result<ActionPair> {
        match self.stage {
            Stage::Approach => approach_step(self, obs, est, config, command, dt),
            Stage::Scanning => scanning_step(self, obs, est, config, command, dt),
            Stage::Done | Stage::Failed(_) => Ok(ActionPair::hold(1.0)),
        }
    }
}

/// `-lambda * J+(s) * e`, clamped to `limit`.
pub fn ibvs_velocity(
    est: &dyn InverseJacobian,
    s: &FeatureVector,
    target: &Pixel,
    lambda: f64,
    limit: f64,
) -> Result<CartesianVelocity> {
    let e = s.error_to(target);
    if !e.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("feature error"));
    }
    let j = est.inverse_jacobian(s)?;
    if !j.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("inverse Jacobian"));
    }
    let v = CartesianVelocity(-(j * e) * lambda);
    if !v.is_finite() {
        return Err(Error::NonFinite("servo velocity"));
    }
    Ok(v.clamped(limit))
}

/// Servo both features onto `target` while holding the settle height.
fn servo(
    ctrl: &mut ControllerState,
    obs: &Observation,
    est: &dyn InverseJacobian,
    config: &ControlConfig,
    dt: f64,
) -> Result<ActionPair> {
    ctrl.error = obs.features.error_to(&ctrl.target);
    let a_vs = match ibvs_velocity(est, &obs.features, &ctrl.target, config.lambda, config.servo_speed_limit_mm_s) {
        Ok(v) => v,
        Err(Error::InvalidArgument(m)) => return Err(Error::InvalidArgument(m)),
        Err(_) => {
            ctrl.fail(FailureReason::Estimator);
            return Ok(ActionPair::hold(1.0));
        }
    };
    if !config.height_compensation {
        return Ok(with_weight(a_vs, CartesianVelocity::ZERO, 1.0).limited(config.speed_limit_mm_s));
    }
    let vz = height_action(obs.h_meas, config.h_target_mm, &mut ctrl.height_pid, &config.height_pid, dt)?;
    let a_hc = CartesianVelocity::vertical(vz.clamp(-config.speed_limit_mm_s, config.speed_limit_mm_s));
    let d = (obs.h_meas - config.h_target_mm).abs();
    Ok(blend(a_vs, a_hc, d, config.alpha, config.k_blend_mm).limited(config.speed_limit_mm_s))
}

/// Drives both features onto the line start; hands over to scanning once
/// they are within the approach threshold and the height is settled.
pub fn approach_step(
    ctrl: &mut ControllerState,
    obs: &Observation,
    est: &dyn InverseJacobian,
    config: &ControlConfig,
    command: &ScanCommand,
    dt: f64,
) -> Result<ActionPair> {
    if ctrl.stage != Stage::Approach {
        return Err(Error::InvalidArgument(format!("approach step in stage {}", ctrl.stage)));
    }
    ctrl.target = command.start_px();
    let close = obs.features.distance_to(&ctrl.target) < config.approach_threshold_px;
    let settled = (obs.h_meas - config.h_target_mm).abs() < config.height_tolerance_mm;
    let action = servo(ctrl, obs, est, config, dt)?;
    if ctrl.stage == Stage::Approach && close && settled {
        ctrl.stage = Stage::Scanning;
        ctrl.progress_px = 0.0;
        ctrl.progress_pid.reset();
    }
    Ok(action)
}

/// Moves the target along the line, paced so the tip image advances at the
/// configured speed, and servos onto it.
pub fn scanning_step(
    ctrl: &mut ControllerState,
    obs: &Observation,
    est: &dyn InverseJacobian,
    config: &ControlConfig,
    command: &ScanCommand,
    dt: f64,
) -> Result<ActionPair> {
    if ctrl.stage != Stage::Scanning {
        return Err(Error::InvalidArgument(format!("scanning step in stage {}", ctrl.stage)));
    }
    let length = command.length_px();
    let (tip_along, _) = command.project(&obs.features.tip);
    let tip_speed = obs.tip_velocity.dot(&command.direction());
    let correction = ctrl
        .progress_pid
        .update(&config.progress_pid, config.scan_speed_px_s - tip_speed, dt);
    let mut rate = (config.scan_speed_px_s + correction).max(0.0);
    if ctrl.progress_px - tip_along > config.max_lead_px {
        rate = 0.0;
    }
    ctrl.progress_px = (ctrl.progress_px + rate * dt).min(length);
    ctrl.target = command.point_at(ctrl.progress_px);
    let action = servo(ctrl, obs, est, config, dt)?;
    if ctrl.stage == Stage::Scanning
        && ctrl.progress_px >= length
        && obs.features.distance_to(&command.end_px()) < config.scan_end_tolerance_px
    {
        ctrl.stage = Stage::Done;
    }
    Ok(action)
}
