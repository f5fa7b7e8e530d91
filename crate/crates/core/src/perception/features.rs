use nalgebra::Vector4;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Pixel, SceneState};

/// The four-component image feature `(u_p, v_p, u_l, v_l)`: probe-tip pixel
/// followed by light-centre pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub tip: Pixel,
    pub light: Pixel,
    pub timestamp: f64,
}

impl FeatureVector {
    pub fn new(tip: Pixel, light: Pixel, timestamp: f64) -> Self {
        Self { tip, light, timestamp }
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.tip.x, self.tip.y, self.light.x, self.light.y)
    }

    pub fn from_vector(s: &Vector4<f64>, timestamp: f64) -> Self {
        Self {
            tip: Pixel::new(s[0], s[1]),
            light: Pixel::new(s[2], s[3]),
            timestamp,
        }
    }

    /// Stacked error of both features against a shared target pixel.
    pub fn error_to(&self, target: &Pixel) -> Vector4<f64> {
        let d_tip = self.tip - target;
        let d_light = self.light - target;
        Vector4::new(d_tip.x, d_tip.y, d_light.x, d_light.y)
    }

    /// Larger of the two feature distances to `target`.
    pub fn distance_to(&self, target: &Pixel) -> f64 {
        (self.tip - target).norm().max((self.light - target).norm())
    }
}

/// Glare around the probe at short range: the segmented illuminated area
/// merges with the bright halo at the tip, pulling its centroid onto the tip
/// pixel. The pull is total below `full_mm` and fades out by `fade_mm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlareModel {
    pub full_mm: f64,
    pub fade_mm: f64,
}

impl GlareModel {
    /// Pull weight in `[0, 1]` at contact height `h`, smoothstep between the
    /// two thresholds.
    pub fn weight(&self, h: f64) -> f64 {
        if h <= self.full_mm {
            1.0
        } else if h >= self.fade_mm {
            0.0
        } else {
            let t = (self.fade_mm - h) / (self.fade_mm - self.full_mm);
            t * t * (3.0 - 2.0 * t)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureNoiseModel {
    /// Per-axis Gaussian detection noise, px.
    pub sigma_px: f64,
    /// Probability that the light centre is not detected in a frame.
    pub dropout_prob: f64,
    pub glare: Option<GlareModel>,
}

impl Default for FeatureNoiseModel {
    fn default() -> Self {
        Self {
            sigma_px: 1.0,
            dropout_prob: 0.01,
            glare: Some(GlareModel {
                full_mm: 6.5,
                fade_mm: 12.0,
            }),
        }
    }
}

impl FeatureNoiseModel {
    pub fn noiseless() -> Self {
        Self {
            sigma_px: 0.0,
            dropout_prob: 0.0,
            glare: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_px.is_finite() && self.sigma_px >= 0.0) {
            return Err(Error::InvalidArgument(format!("sigma_px must be >= 0, got {}", self.sigma_px)));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::InvalidArgument(format!(
                "dropout_prob must lie in [0, 1], got {}",
                self.dropout_prob
            )));
        }
        if let Some(g) = self.glare {
            if !(g.full_mm.is_finite() && g.fade_mm > g.full_mm) {
                return Err(Error::InvalidArgument("glare fade_mm must exceed full_mm".into()));
            }
        }
        Ok(())
    }

    fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Pixel {
        let nx: f64 = StandardNormal.sample(rng);
        let ny: f64 = StandardNormal.sample(rng);
        Pixel::new(nx, ny) * self.sigma_px
    }
}

/// Noisy probe-tip detection.
pub fn measure_tip<R: Rng + ?Sized>(state: &SceneState, noise: &FeatureNoiseModel, rng: &mut R) -> Result<Pixel> {
    let (tip, _) = state.ground_truth_features()?;
    Ok(tip + noise.noise(rng))
}

/// Noisy detection of both features. `None` when the light centre is lost.
///
/// Random draws per call, in order: one uniform for dropout, then two normals
/// for the tip and two for the light centre.
pub fn measure_features<R: Rng + ?Sized>(
    state: &SceneState,
    noise: &FeatureNoiseModel,
    rng: &mut R,
) -> Result<Option<FeatureVector>> {
    let (tip, light) = state.ground_truth_features()?;
    let dropped = rng.gen::<f64>() < noise.dropout_prob;
    let tip_noise = noise.noise(rng);
    let light_noise = noise.noise(rng);
    if dropped {
        return Ok(None);
    }
    let tip_meas = tip + tip_noise;
    let mut light_meas = light + light_noise;
    if let Some(glare) = noise.glare {
        let w = glare.weight(state.contact_height()?.h);
        light_meas = light_meas * (1.0 - w) + tip_meas * w;
    }
    Ok(Some(FeatureVector::new(tip_meas, light_meas, state.time)))
}
