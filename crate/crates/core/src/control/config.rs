use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::pid::PidGains;
use crate::error::{Error, Result};
use crate::perception::KalmanConfig;
use crate::scene::{PinholeCamera, Pixel, Scene};
use crate::SamplePreset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    /// Visual-servoing gain, 1/s.
    pub lambda: f64,
    /// Lower limit of the visual-servoing weight.
    pub alpha: f64,
    /// Height error over which the weight rises toward one, mm.
    pub k_blend_mm: f64,
    /// Settle height, mm. Negative compresses the tissue.
    pub h_target_mm: f64,
    pub height_pid: PidGains,
    /// Paces the scan target so the tip moves along the line at the set speed.
    pub progress_pid: PidGains,
    /// Bound on the blended command.
    pub speed_limit_mm_s: f64,
    /// Bound on the visual-servoing action alone. In contact the action is
    /// weighted by roughly `alpha`, so this sits well above the command limit.
    pub servo_speed_limit_mm_s: f64,
    pub approach_threshold_px: f64,
    pub height_tolerance_mm: f64,
    /// Nominal advance of the scan target along the line, px/s.
    pub scan_speed_px_s: f64,
    /// Feature distance to the line end at which the scan counts as finished.
    pub scan_end_tolerance_px: f64,
    /// The scan target waits while it leads the tip by more than this.
    pub max_lead_px: f64,
    pub control_rate_hz: f64,
    /// Feature detector rate; the Kalman tracks predict in between.
    pub detection_rate_hz: f64,
    /// Consecutive missed light-centre detections before the trial fails.
    pub dropout_limit: usize,
    pub timeout_s: f64,
    /// With the compensator off the command is pure visual servoing.
    pub height_compensation: bool,
    pub kalman: KalmanConfig,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            lambda: 0.8,
            alpha: 0.2,
            k_blend_mm: 2.0,
            h_target_mm: 0.0,
            height_pid: PidGains {
                kp: 3.0,
                ki: 0.5,
                kd: 0.0,
                integral_limit: 2.0,
                output_limit: 10.0,
            },
            progress_pid: PidGains {
                kp: 0.5,
                ki: 0.5,
                kd: 0.0,
                integral_limit: 20.0,
                output_limit: 9.0,
            },
            speed_limit_mm_s: 10.0,
            servo_speed_limit_mm_s: 30.0,
            approach_threshold_px: 1.29,
            height_tolerance_mm: 0.5,
            scan_speed_px_s: 14.0,
            scan_end_tolerance_px: 5.0,
            max_lead_px: 60.0,
            control_rate_hz: 30.0,
            detection_rate_hz: 15.0,
            dropout_limit: 30,
            timeout_s: 120.0,
            height_compensation: true,
            kalman: KalmanConfig::default(),
        }
    }
}

impl ControlConfig {
    /// Settle height and weight floor used for each sample type, with gains
    /// tuned in simulation.
    pub fn for_preset(preset: SamplePreset) -> Self {
        let (h_target_mm, alpha, scan_speed_px_s) = match preset {
            SamplePreset::LiverPhantom => (0.0, 0.2, 10.0),
            SamplePreset::StomachPhantom => (-2.0, 0.3, 10.0),
            SamplePreset::RumpSteak => (0.0, 0.4, 9.0),
            SamplePreset::LambLiver => (1.0, 0.2, 10.0),
        };
        Self {
            lambda: 2.0,
            h_target_mm,
            alpha,
            scan_speed_px_s,
            ..Self::default()
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate_hz
    }

    /// Control ticks per detector frame.
    pub fn detection_stride(&self) -> usize {
        ((self.control_rate_hz / self.detection_rate_hz).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("k_blend_mm", self.k_blend_mm),
            ("speed_limit_mm_s", self.speed_limit_mm_s),
            ("servo_speed_limit_mm_s", self.servo_speed_limit_mm_s),
            ("approach_threshold_px", self.approach_threshold_px),
            ("height_tolerance_mm", self.height_tolerance_mm),
            ("scan_speed_px_s", self.scan_speed_px_s),
            ("scan_end_tolerance_px", self.scan_end_tolerance_px),
            ("max_lead_px", self.max_lead_px),
            ("control_rate_hz", self.control_rate_hz),
            ("detection_rate_hz", self.detection_rate_hz),
            ("timeout_s", self.timeout_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !self.h_target_mm.is_finite() {
            return Err(Error::Config("h_target_mm must be finite".into()));
        }
        if self.detection_rate_hz > self.control_rate_hz {
            return Err(Error::Config("detection_rate_hz may not exceed control_rate_hz".into()));
        }
        if self.dropout_limit == 0 {
            return Err(Error::Config("dropout_limit must be at least 1".into()));
        }
        self.height_pid.validate("height")?;
        self.progress_pid.validate("progress")?;
        self.kalman.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Image-plane line to scan, in third-person camera pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanCommand {
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl ScanCommand {
    pub fn new(start: Pixel, end: Pixel, camera: &PinholeCamera) -> Result<Self> {
        let cmd = Self {
            start: [start.x, start.y],
            end: [end.x, end.y],
        };
        cmd.validate(camera)?;
        Ok(cmd)
    }

    /// The image of the straight surface path from `a` to `b`, both `(x, y)` in mm.
    pub fn surface_line(scene: &Scene, a: [f64; 2], b: [f64; 2]) -> Result<Self> {
        let cam = &scene.third_person;
        let pa = cam.project(&scene.surface_point(a[0], a[1])?)?;
        let pb = cam.project(&scene.surface_point(b[0], b[1])?)?;
        Self::new(pa, pb, cam)
    }

    /// Across the front of the sample, 80 mm long.
    pub fn default_for(scene: &Scene) -> Result<Self> {
        Self::surface_line(scene, [-40.0, 5.0], [40.0, 5.0])
    }

    /// Parses `u0,v0,u1,v1`.
    pub fn parse(text: &str) -> Result<Self> {
        let v: Vec<f64> = text
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("--line `{text}`: {e}")))?;
        if v.len() != 4 {
            return Err(Error::Config(format!("--line needs u0,v0,u1,v1, got `{text}`")));
        }
        Ok(Self {
            start: [v[0], v[1]],
            end: [v[2], v[3]],
        })
    }

    pub fn validate(&self, camera: &PinholeCamera) -> Result<()> {
        let (s, e) = (self.start_px(), self.end_px());
        if !(s.iter().chain(e.iter()).all(|v| v.is_finite())) {
            return Err(Error::Config("scan line has non-finite endpoints".into()));
        }
        if s == e {
            return Err(Error::Config("scan line start and end coincide".into()));
        }
        if !(camera.contains(&s) && camera.contains(&e)) {
            return Err(Error::Config(format!(
                "scan line ({}, {}) -> ({}, {}) leaves the {}x{} image",
                s.x, s.y, e.x, e.y, camera.width, camera.height
            )));
        }
        Ok(())
    }

    pub fn start_px(&self) -> Pixel {
        Pixel::new(self.start[0], self.start[1])
    }

    pub fn end_px(&self) -> Pixel {
        Pixel::new(self.end[0], self.end[1])
    }

    pub fn length_px(&self) -> f64 {
        (self.end_px() - self.start_px()).norm()
    }

    pub fn direction(&self) -> Vector2<f64> {
        (self.end_px() - self.start_px()) / self.length_px()
    }

    /// Point `along` px from the start.
    pub fn point_at(&self, along: f64) -> Pixel {
        self.start_px() + self.direction() * along
    }

    /// Distance along the line of the foot of `p`, and its signed offset to the left.
    pub fn project(&self, p: &Pixel) -> (f64, f64) {
        let d = self.direction();
        let r = p - self.start_px();
        (r.dot(&d), d.x * r.y - d.y * r.x)
    }

    /// Unsigned distance from `p` to the infinite line through the endpoints.
    pub fn perpendicular_distance(&self, p: &Pixel) -> f64 {
        self.project(p).1.abs()
    }
}
