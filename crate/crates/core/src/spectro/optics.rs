//! Forward model from contact height to a raw spectrometer reading.
//!
//! Light coupling into the fibre falls off as a Gaussian of the gap, and
//! compressing the tissue tilts its reflectance linearly across the band.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Spectrum, SpectrumRole, WavelengthGrid};
use crate::error::{Error, Result};

/// Smooth base reflectance: a red-side logistic rise minus two haemoglobin-like
/// absorption dips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialOptics {
    pub base: f64,
    pub rise: f64,
    pub rise_centre_nm: f64,
    pub rise_width_nm: f64,
    pub dip_depth: f64,
}

impl MaterialOptics {
    pub fn reflectance(&self, lambda: f64) -> f64 {
        let rise = self.rise / (1.0 + (-(lambda - self.rise_centre_nm) / self.rise_width_nm).exp());
        let dips = [(542.0, 11.0), (577.0, 11.0)]
            .iter()
            .map(|(c, w)| (-((lambda - c) / w).powi(2)).exp())
            .sum::<f64>();
        (self.base + rise - self.dip_depth * dips).clamp(0.01, 0.99)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (base, rise, rise_centre_nm, dip_depth) = match name {
            "liver_phantom" => (0.15, 0.35, 600.0, 0.06),
            "stomach_phantom" => (0.25, 0.40, 590.0, 0.04),
            "rump_steak" => (0.10, 0.30, 595.0, 0.05),
            "rump_steak_fat" => (0.45, 0.20, 560.0, 0.02),
            "lamb_liver" => (0.06, 0.18, 610.0, 0.03),
            other => return Err(Error::UnknownMaterial(other.to_string())),
        };
        Ok(Self {
            base,
            rise,
            rise_centre_nm,
            rise_width_nm: 20.0,
            dip_depth,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueOpticalModel {
    pub grid: WavelengthGrid,
    /// White reference level, counts.
    pub white_counts: f64,
    /// Dark reference level, counts.
    pub dark_counts: f64,
    /// Gap at which coupling drops to 1/e, mm.
    pub gap_decay_mm: f64,
    /// Reflectance tilt per mm of compression, fraction across the band.
    pub compression_tilt: f64,
    /// Per-channel detector noise, counts.
    pub noise_sigma: f64,
    /// Keyed by material fingerprint id.
    pub materials: BTreeMap<String, MaterialOptics>,
}

impl Default for TissueOpticalModel {
    fn default() -> Self {
        let materials = ["liver_phantom", "stomach_phantom", "rump_steak", "rump_steak_fat", "lamb_liver"]
            .into_iter()
            .map(|n| (n.to_string(), MaterialOptics::preset(n).expect("known preset")))
            .collect();
        Self {
            grid: WavelengthGrid::full(),
            white_counts: 1000.0,
            dark_counts: 50.0,
            gap_decay_mm: 2.0,
            compression_tilt: 0.08,
            noise_sigma: 2.0,
            materials,
        }
    }
}

impl TissueOpticalModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_decay_mm > 0.0 && self.noise_sigma >= 0.0 && self.white_counts > self.dark_counts) {
            return Err(Error::InvalidArgument(
                "optical model needs gap_decay_mm > 0, noise_sigma >= 0 and white above dark".into(),
            ));
        }
        Ok(())
    }

    pub fn white(&self) -> Spectrum {
        Spectrum::constant(self.grid, SpectrumRole::White, self.white_counts)
    }

    pub fn dark(&self) -> Spectrum {
        Spectrum::constant(self.grid, SpectrumRole::Dark, self.dark_counts)
    }

    /// `exp(-(max(h, 0) / h0)^2)`.
    pub fn coupling(&self, h: f64) -> f64 {
        (-(h.max(0.0) / self.gap_decay_mm).powi(2)).exp()
    }

    pub fn material(&self, id: &str) -> Result<&MaterialOptics> {
        self.materials.get(id).ok_or_else(|| Error::UnknownMaterial(id.to_string()))
    }

    /// Base reflectance, tilted when `h < 0`.
    pub fn reflectance(&self, id: &str, h: f64) -> Result<Vec<f64>> {
        let m = self.material(id)?;
        let (lo, hi) = (self.grid.start_nm, self.grid.end_nm());
        let mid = 0.5 * (lo + hi);
        let span = (hi - lo).max(f64::MIN_POSITIVE);
        let tilt = self.compression_tilt * (-h).max(0.0);
        Ok(self
            .grid
            .wavelengths()
            .into_iter()
            .map(|l| m.reflectance(l) * (1.0 + tilt * (l - mid) / span))
            .collect())
    }
}

/// One raw reading of material `id` at contact height `h`. Draws one normal
/// per channel.
pub fn synthesize_raw<R: Rng + ?Sized>(model: &TissueOpticalModel, id: &str, h: f64, rng: &mut R) -> Result<Spectrum> {
    if !h.is_finite() {
        return Err(Error::NonFinite("contact height"));
    }
    let b = model.reflectance(id, h)?;
    let g = model.coupling(h);
    let span = model.white_counts - model.dark_counts;
    let values = b
        .iter()
        .map(|r| {
            let eps: f64 = StandardNormal.sample(rng);
            model.dark_counts + g * r * span + model.noise_sigma * eps
        })
        .collect();
    Spectrum::new(model.grid, SpectrumRole::Raw, values)
}
