//! Spectra: synthetic acquisition under contact variation, and the
//! calibrate, smooth, crop, decompose pipeline.

pub mod io;
mod optics;
mod pipeline;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use optics::{synthesize_raw, MaterialOptics, TissueOpticalModel};
pub use pipeline::{
    calibrate, crop, fingerprint, intensity, process, savgol, savgol_coefficients, Pipeline, PipelineConfig,
    ProcessedSpectrum, SavgolFilter,
};

/// Uniform wavelength grid, nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavelengthGrid {
    pub start_nm: f64,
    pub step_nm: f64,
    pub len: usize,
}

impl WavelengthGrid {
    pub fn new(start_nm: f64, step_nm: f64, len: usize) -> Result<Self> {
        if !(start_nm.is_finite() && step_nm.is_finite() && step_nm > 0.0 && len > 0) {
            return Err(Error::InvalidArgument(format!(
                "wavelength grid needs a finite start, positive step and channels (got {start_nm}, {step_nm}, {len})"
            )));
        }
        Ok(Self { start_nm, step_nm, len })
    }

    /// 400 to 900 nm at 1 nm.
    pub fn full() -> Self {
        Self {
            start_nm: 400.0,
            step_nm: 1.0,
            len: 501,
        }
    }

    pub fn wavelength(&self, i: usize) -> f64 {
        self.start_nm + self.step_nm * i as f64
    }

    pub fn end_nm(&self) -> f64 {
        self.wavelength(self.len - 1)
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.wavelength(i)).collect()
    }

    /// Channel range covering `[lo, hi]` inclusively.
    pub fn band(&self, lo: f64, hi: f64) -> Result<std::ops::Range<usize>> {
        let tol = 1e-9 * self.step_nm;
        if !(lo <= hi) || lo < self.start_nm - tol || hi > self.end_nm() + tol {
            return Err(Error::InvalidArgument(format!(
                "band {lo}-{hi} nm is not inside the grid {}-{} nm",
                self.start_nm,
                self.end_nm()
            )));
        }
        let first = ((lo - self.start_nm) / self.step_nm - 1e-9).ceil().max(0.0) as usize;
        let last = ((hi - self.start_nm) / self.step_nm + 1e-9).floor() as usize;
        if first > last {
            return Err(Error::InvalidArgument(format!("band {lo}-{hi} nm holds no channels")));
        }
        Ok(first..last.min(self.len - 1) + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumRole {
    Raw,
    White,
    Dark,
    Calibrated,
}

impl SpectrumRole {
    pub fn tag(self) -> &'static str {
        match self {
            SpectrumRole::Raw => "raw",
            SpectrumRole::White => "white",
            SpectrumRole::Dark => "dark",
            SpectrumRole::Calibrated => "calibrated",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "raw" => SpectrumRole::Raw,
            "white" => SpectrumRole::White,
            "dark" => SpectrumRole::Dark,
            "calibrated" => SpectrumRole::Calibrated,
            other => return Err(Error::Format(format!("unknown spectrum role `{other}`"))),
        })
    }
}

/// Calibrated values outside this range are flagged.
pub const CALIBRATED_RANGE: (f64, f64) = (-0.1, 1.5);

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: WavelengthGrid,
    pub role: SpectrumRole,
    pub values: Vec<f64>,
}

impl Spectrum {
    pub fn new(grid: WavelengthGrid, role: SpectrumRole, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len {
            return Err(Error::DimensionMismatch {
                expected: grid.len,
                got: values.len(),
            });
        }
        crate::error::ensure_finite(&values, "spectrum")?;
        Ok(Self { grid, role, values })
    }

    pub fn constant(grid: WavelengthGrid, role: SpectrumRole, value: f64) -> Self {
        Self {
            grid,
            role,
            values: vec![value; grid.len],
        }
    }

    /// Channels of a calibrated spectrum outside the plausible range.
    pub fn flagged_channels(&self) -> Vec<usize> {
        if self.role != SpectrumRole::Calibrated {
            return Vec::new();
        }
        let (lo, hi) = CALIBRATED_RANGE;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v < lo || v > hi)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Unit-norm spectral shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub values: Vec<f64>,
}

impl Fingerprint {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
