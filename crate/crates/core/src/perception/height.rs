//! Parametric contact-height sensor.
//!
//! Stands in for the image-based height estimator: a reading is the true
//! contact height plus a material- and height-dependent bias and Gaussian
//! noise. Profiles are named after the material noise profile they model.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::SceneState;

/// `base + peak * exp(-(h / width)^2)`, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeightProfile {
    pub base: f64,
    pub peak: f64,
    pub width: f64,
}

impl HeightProfile {
    pub const ZERO: HeightProfile = HeightProfile::constant(0.0);

    pub const fn constant(value: f64) -> Self {
        Self {
            base: value,
            peak: 0.0,
            width: 1.0,
        }
    }

    pub fn eval(&self, h: f64) -> f64 {
        self.base + self.peak * (-(h / self.width).powi(2)).exp()
    }
}

/// Noise (`sigma`) and bias profiles for one material class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeightNoise {
    pub sigma: HeightProfile,
    pub bias: HeightProfile,
}

impl HeightNoise {
    pub fn sigma_at(&self, h: f64) -> f64 {
        self.sigma.eval(h).max(0.0)
    }

    pub fn bias_at(&self, h: f64) -> f64 {
        self.bias.eval(h)
    }

    /// Sigma such that a zero-bias Gaussian reading has the given mean
    /// absolute error (`E|e| = sigma * sqrt(2/pi)`).
    pub fn from_mae(mae: f64) -> Self {
        Self {
            sigma: HeightProfile::constant(mae * (std::f64::consts::PI / 2.0).sqrt()),
            bias: HeightProfile::ZERO,
        }
    }

    pub fn exact() -> Self {
        Self {
            sigma: HeightProfile::ZERO,
            bias: HeightProfile::ZERO,
        }
    }

    /// Named preset. `liver_phantom` inflates noise and bias around contact;
    /// `lamb_liver` is uniformly small (0.06 mm mean absolute error);
    /// `spectrum_regressor` models the spectrum-based alternative (1.12 mm MAE).
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "liver_phantom" => Self {
                sigma: HeightProfile {
                    base: 0.08,
                    peak: 0.30,
                    width: 2.0,
                },
                bias: HeightProfile {
                    base: 0.0,
                    peak: 0.15,
                    width: 2.0,
                },
            },
            "stomach_phantom" => Self {
                sigma: HeightProfile {
                    base: 0.08,
                    peak: 0.10,
                    width: 2.0,
                },
                bias: HeightProfile::ZERO,
            },
            "rump_steak" => Self {
                sigma: HeightProfile::constant(0.12),
                bias: HeightProfile::ZERO,
            },
            "lamb_liver" => Self::from_mae(0.06),
            "spectrum_regressor" => Self::from_mae(1.12),
            other => return Err(Error::UnknownMaterial(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeightSensorModel {
    /// Noise per material noise-profile name.
    pub profiles: BTreeMap<String, HeightNoise>,
    pub rate_hz: f64,
}

impl HeightSensorModel {
    /// All named presets at 30 Hz.
    pub fn presets() -> Self {
        let profiles = ["liver_phantom", "stomach_phantom", "rump_steak", "lamb_liver", "spectrum_regressor"]
            .into_iter()
            .map(|n| (n.to_string(), HeightNoise::preset(n).expect("known preset")))
            .collect();
        Self { profiles, rate_hz: 30.0 }
    }

    /// Every profile in `names` mapped to the same noise.
    pub fn uniform<'a>(names: impl IntoIterator<Item = &'a str>, noise: HeightNoise) -> Self {
        Self {
            profiles: names.into_iter().map(|n| (n.to_string(), noise)).collect(),
            rate_hz: 30.0,
        }
    }

    pub fn noise_for(&self, state: &SceneState) -> Result<&HeightNoise> {
        let contact = state.contact_height()?;
        let material = state
            .scene
            .tissue
            .material(contact.material)
            .ok_or_else(|| Error::UnknownMaterial(format!("id {}", contact.material)))?;
        self.profiles
            .get(&material.noise_profile)
            .ok_or_else(|| Error::UnknownMaterial(material.noise_profile.clone()))
    }
}

/// One contact-height reading in mm. Draws exactly one normal variate.
pub fn measure_height<R: Rng + ?Sized>(state: &SceneState, model: &HeightSensorModel, rng: &mut R) -> Result<f64> {
    let h = state.contact_height()?.h;
    let noise = model.noise_for(state)?;
    let eps: f64 = StandardNormal.sample(rng);
    Ok(h + noise.bias_at(h) + noise.sigma_at(h) * eps)
}
