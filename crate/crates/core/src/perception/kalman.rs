//! Constant-velocity Kalman track for one image feature.
//!
//! State is `(u, v, du/dt, dv/dt)`. Predicting on every control tick and
//! updating only when a detection arrives interpolates a slow detector up to
//! the control rate.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, SymmetricEigen, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Pixel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalmanConfig {
    /// White-acceleration spectral density, px^2/s^3.
    pub q: f64,
    /// Measurement variance per axis, px^2.
    pub r: f64,
    /// Initial velocity variance, (px/s)^2.
    pub initial_velocity_var: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            q: 400.0,
            r: 1.0,
            initial_velocity_var: 1.0e4,
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 0.0 && self.r >= 0.0 && self.initial_velocity_var >= 0.0)
            || !(self.q.is_finite() && self.r.is_finite() && self.initial_velocity_var.is_finite())
        {
            return Err(Error::InvalidArgument("Kalman q, r and initial variance must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Filtered output of one [`KalmanTrack::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanEstimate {
    pub position: Pixel,
    pub velocity: Vector2<f64>,
    /// The covariance had drifted from positive semi-definite and was repaired.
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    state: Vector4<f64>,
    covariance: Matrix4<f64>,
    config: KalmanConfig,
}

const H: Matrix2x4<f64> = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);

impl KalmanTrack {
    /// Starts a track at a first detection with zero velocity.
    pub fn new(first: Pixel, config: KalmanConfig) -> Self {
        let mut covariance = Matrix4::zeros();
        covariance[(0, 0)] = config.r;
        covariance[(1, 1)] = config.r;
        covariance[(2, 2)] = config.initial_velocity_var;
        covariance[(3, 3)] = config.initial_velocity_var;
        Self {
            state: Vector4::new(first.x, first.y, 0.0, 0.0),
            covariance,
            config,
        }
    }

    /// Track with a known state, e.g. for tests.
    pub fn with_state(position: Pixel, velocity: Vector2<f64>, covariance: Matrix4<f64>, config: KalmanConfig) -> Self {
        Self {
            state: Vector4::new(position.x, position.y, velocity.x, velocity.y),
            covariance,
            config,
        }
    }

    pub fn position(&self) -> Pixel {
        Pixel::new(self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.state[2], self.state[3])
    }

    pub fn covariance(&self) -> &Matrix4<f64> {
        &self.covariance
    }

    pub fn config(&self) -> &KalmanConfig {
        &self.config
    }

    /// Predicts over `dt` and, when `z` is present, corrects with it.
    pub fn step(&mut self, z: Option<Pixel>, dt: f64) -> Result<KalmanEstimate> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        let mut f = Matrix4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let q = self.config.q;
        let (a, b, c) = (q * dt.powi(3) / 3.0, q * dt * dt / 2.0, q * dt);
        let process = Matrix4::new(
            a, 0.0, b, 0.0, //
            0.0, a, 0.0, b, //
            b, 0.0, c, 0.0, //
            0.0, b, 0.0, c,
        );
        self.state = f * self.state;
        self.covariance = f * self.covariance * f.transpose() + process;

        if let Some(z) = z {
            if !(z.x.is_finite() && z.y.is_finite()) {
                return Err(Error::NonFinite("feature measurement"));
            }
            let r = Matrix2::identity() * self.config.r;
            let s = H * self.covariance * H.transpose() + r + Matrix2::identity() * 1e-12;
            let s_inv = s.try_inverse().ok_or(Error::NonFinite("innovation covariance"))?;
            let gain = self.covariance * H.transpose() * s_inv;
            let innovation = z - H * self.state;
            self.state += gain * innovation;
            // Joseph form keeps the update symmetric and PSD in exact arithmetic.
            let i_kh = Matrix4::identity() - gain * H;
            self.covariance = i_kh * self.covariance * i_kh.transpose() + gain * r * gain.transpose();
        }
        let repaired = self.repair_covariance();
        Ok(KalmanEstimate {
            position: self.position(),
            velocity: self.velocity(),
            repaired,
        })
    }

    /// Symmetrises the covariance and clamps negative eigenvalues to zero.
    /// Returns whether a clamp was needed.
    fn repair_covariance(&mut self) -> bool {
        let p = (self.covariance + self.covariance.transpose()) * 0.5;
        self.covariance = p;
        let tol = 1e-12 * p.trace().abs().max(1e-300);
        let eig = SymmetricEigen::new(p);
        if eig.eigenvalues.iter().all(|&l| l >= -tol) {
            return false;
        }
        let clamped = eig.eigenvalues.map(|l| l.max(0.0));
        self.covariance = eig.eigenvectors * Matrix4::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStreams;
    use rand_distr::{Distribution, StandardNormal};

    const DT: f64 = 1.0 / 30.0;

    fn is_psd(p: &Matrix4<f64>) -> bool {
        (p - p.transpose()).norm() < 1e-12 && SymmetricEigen::new(*p).eigenvalues.iter().all(|&l| l >= -1e-12)
    }

    #[test]
    fn stationary_target_converges() {
        let target = Pixel::new(200.0, 150.0);
        let mut track = KalmanTrack::new(Pixel::new(180.0, 170.0), KalmanConfig::default());
        let mut last = None;
        for _ in 0..600 {
            last = Some(track.step(Some(target), DT).unwrap());
        }
        let est = last.unwrap();
        assert!((est.position - target).norm() < 1e-6);
        assert!(est.velocity.norm() < 1e-6);
    }

    #[test]
    fn interpolates_half_rate_measurements_on_the_line() {
        // Detections at 15 Hz, control at 30 Hz: every other step is predict-only.
        let p0 = Pixel::new(100.0, 300.0);
        let vel = Vector2::new(12.0, -5.0);
        let truth = |k: usize| p0 + vel * (k as f64 * DT);
        let mut track = KalmanTrack::new(truth(0), KalmanConfig::default());
        for k in 1..300 {
            let z = (k % 2 == 0).then(|| truth(k));
            let est = track.step(z, DT).unwrap();
            if k > 60 && z.is_none() {
                assert!((est.position - truth(k)).norm() < 0.5, "tick {k}");
            }
        }
    }

    #[test]
    fn zero_process_noise_output_is_phase_independent() {
        let cfg = KalmanConfig {
            q: 0.0,
            r: 0.0,
            initial_velocity_var: 1.0e6,
        };
        let p0 = Pixel::new(50.0, 60.0);
        let vel = Vector2::new(-3.0, 7.5);
        let truth = |k: usize| p0 + vel * (k as f64 * DT);
        for phase in 0..3 {
            let mut track = KalmanTrack::new(truth(0), cfg);
            let mut seen = 0;
            for k in 1..90 {
                let z = (k % 3 == phase).then(|| truth(k));
                seen += usize::from(z.is_some());
                let est = track.step(z, DT).unwrap();
                if seen >= 1 {
                    assert!((est.position - truth(k)).norm() < 1e-6, "phase {phase} tick {k}");
                }
            }
        }
    }

    #[test]
    fn steady_state_variance_below_half_measurement_variance() {
        let cfg = KalmanConfig::default();
        let mut rng = SeedStreams::new(5).stream("kf", 0);
        let p0 = Pixel::new(100.0, 100.0);
        let vel = Vector2::new(8.0, 3.0);
        let mut track = KalmanTrack::new(p0, cfg);
        let (mut raw_sq, mut filt_sq, mut n) = (0.0, 0.0, 0usize);
        for k in 1..20_000 {
            let truth = p0 + vel * (k as f64 * DT);
            let nx: f64 = StandardNormal.sample(&mut rng);
            let ny: f64 = StandardNormal.sample(&mut rng);
            let z = truth + Pixel::new(nx, ny) * cfg.r.sqrt();
            let est = track.step(Some(z), DT).unwrap();
            if k > 300 {
                raw_sq += (z - truth).norm_squared();
                filt_sq += (est.position - truth).norm_squared();
                n += 1;
            }
        }
        let ratio = filt_sq / raw_sq;
        assert!(n > 0 && ratio <= 0.5, "variance ratio {ratio}");
    }

    #[test]
    fn covariance_stays_psd_and_repairs_are_reported() {
        let mut track = KalmanTrack::new(Pixel::new(0.0, 0.0), KalmanConfig::default());
        for k in 0..500 {
            let z = (k % 4 != 0).then(|| Pixel::new(k as f64 * 0.1, 2.0));
            assert!(!track.step(z, DT).unwrap().repaired);
            assert!(is_psd(track.covariance()));
        }
        let mut broken = Matrix4::identity();
        broken[(2, 2)] = -100.0;
        let mut track = KalmanTrack::with_state(Pixel::new(1.0, 1.0), Vector2::zeros(), broken, KalmanConfig::default());
        let est = track.step(None, DT).unwrap();
        assert!(est.repaired);
        assert!(is_psd(track.covariance()));
    }

    #[test]
    fn rejects_bad_dt() {
        let mut track = KalmanTrack::new(Pixel::new(0.0, 0.0), KalmanConfig::default());
        assert!(track.step(None, 0.0).is_err());
        assert!(track.step(None, -DT).is_err());
    }
}
