use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Bound on the accumulated integral, in error units times seconds.
    pub integral_limit: f64,
    /// Bound on the output magnitude.
    pub output_limit: f64,
}

impl PidGains {
    pub fn proportional(kp: f64, output_limit: f64) -> Self {
        Self {
            kp,
            ki: 0.0,
            kd: 0.0,
            integral_limit: 0.0,
            output_limit,
        }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        let all = [self.kp, self.ki, self.kd, self.integral_limit, self.output_limit];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) || self.output_limit <= 0.0 {
            return Err(Error::Config(format!(
                "{what} PID gains and limits must be finite and non-negative, with a positive output limit"
            )));
        }
        Ok(())
    }
}

/// PID memory. The integral is clamped, and frozen while the output is
/// saturated in the direction the error pushes it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pid {
    pub integral: f64,
    pub prev_error: Option<f64>,
}

impl Pid {
    pub fn update(&mut self, gains: &PidGains, error: f64, dt: f64) -> f64 {
        let derivative = self.prev_error.map_or(0.0, |p| (error - p) / dt);
        let candidate = (self.integral + error * dt).clamp(-gains.integral_limit, gains.integral_limit);
        let raw = gains.kp * error + gains.ki * candidate + gains.kd * derivative;
        let out = raw.clamp(-gains.output_limit, gains.output_limit);
        if out == raw || raw.signum() != error.signum() {
            self.integral = candidate;
        }
        self.prev_error = Some(error);
        out
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// Vertical velocity driving the measured contact height toward `h_target`.
pub fn height_action(h_meas: f64, h_target: f64, pid: &mut Pid, gains: &PidGains, dt: f64) -> Result<f64> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    if !(h_meas.is_finite() && h_target.is_finite()) {
        return Err(Error::NonFinite("contact height"));
    }
    Ok(pid.update(gains, h_target - h_meas, dt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gains() -> PidGains {
        PidGains {
            kp: 2.0,
            ki: 1.0,
            kd: 0.1,
            integral_limit: 1.0,
            output_limit: 10.0,
        }
    }

    #[test]
    fn on_target_gives_nothing() {
        let mut pid = Pid::default();
        for _ in 0..10 {
            assert_eq!(height_action(1.0, 1.0, &mut pid, &gains(), 1.0 / 30.0).unwrap(), 0.0);
        }
        assert_eq!(pid.integral, 0.0);
    }

    #[test]
    fn proportional_only() {
        let mut pid = Pid::default();
        let g = PidGains::proportional(1.0, 10.0);
        // Probe 2 mm above the target: move down at 2 mm/s.
        assert_eq!(height_action(2.0, 0.0, &mut pid, &g, 0.1).unwrap(), -2.0);
        assert_eq!(height_action(-1.0, 0.0, &mut pid, &g, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn integral_is_clamped_and_output_limited() {
        let mut pid = Pid::default();
        let g = PidGains {
            output_limit: 100.0,
            ..gains()
        };
        for _ in 0..1000 {
            pid.update(&g, 3.0, 0.1);
        }
        assert_eq!(pid.integral, 1.0);
        let mut pid = Pid::default();
        let out = pid.update(&gains(), 50.0, 0.1);
        assert_eq!(out, 10.0);
    }

    #[test]
    fn saturation_freezes_the_integral() {
        let g = PidGains {
            kp: 1.0,
            ki: 1.0,
            kd: 0.0,
            integral_limit: 100.0,
            output_limit: 1.0,
        };
        let mut pid = Pid::default();
        for _ in 0..50 {
            assert_eq!(pid.update(&g, 5.0, 0.1), 1.0);
        }
        assert_eq!(pid.integral, 0.0);
        // Error reverses: no stored windup to unwind.
        assert_eq!(pid.update(&g, -0.5, 0.1), -0.55);
    }

    #[test]
    fn derivative_uses_error_change() {
        let g = PidGains {
            kp: 0.0,
            ki: 0.0,
            kd: 1.0,
            integral_limit: 0.0,
            output_limit: 10.0,
        };
        let mut pid = Pid::default();
        assert_eq!(pid.update(&g, 1.0, 0.5), 0.0);
        assert_eq!(pid.update(&g, 2.0, 0.5), 2.0);
    }

    #[test]
    fn bad_dt_is_rejected() {
        let mut pid = Pid::default();
        assert!(height_action(0.0, 1.0, &mut pid, &gains(), 0.0).is_err());
        assert!(height_action(f64::NAN, 1.0, &mut pid, &gains(), 0.1).is_err());
    }
}
