use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Fingerprint, Spectrum, SpectrumRole, WavelengthGrid};
use crate::error::{Error, Result};

/// `(R - D) / (W - D)` channel by channel.
pub fn calibrate(raw: &Spectrum, white: &Spectrum, dark: &Spectrum) -> Result<Spectrum> {
    if raw.grid != white.grid || raw.grid != dark.grid {
        return Err(Error::InvalidArgument("raw, white and dark spectra must share a grid".into()));
    }
    let bad: Vec<usize> = white
        .values
        .iter()
        .zip(&dark.values)
        .enumerate()
        .filter(|(_, (w, d))| !(*w - *d > 0.0))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Calibration(bad));
    }
    let values = raw
        .values
        .iter()
        .zip(&white.values)
        .zip(&dark.values)
        .map(|((r, w), d)| (r - d) / (w - d))
        .collect();
    Ok(Spectrum {
        grid: raw.grid,
        role: SpectrumRole::Calibrated,
        values,
    })
}

/// Weights that evaluate, at window position `at`, the degree-`order`
/// least-squares polynomial through `window` equally spaced samples.
pub fn savgol_coefficients(window: usize, order: usize, at: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 || order >= window || at >= window {
        return Err(Error::InvalidArgument(format!(
            "Savitzky-Golay needs an odd window above the order (window {window}, order {order})"
        )));
    }
    let half = (window / 2) as f64;
    let scale = half.max(1.0);
    let vander = DMatrix::from_fn(window, order + 1, |i, k| ((i as f64 - half) / scale).powi(k as i32));
    let pinv = vander
        .clone()
        .pseudo_inverse(1e-14)
        .map_err(|e| Error::Fit(format!("Savitzky-Golay design: {e}")))?;
    let t = (at as f64 - half) / scale;
    let row = DMatrix::from_fn(1, order + 1, |_, k| t.powi(k as i32));
    Ok((row * pinv).iter().copied().collect())
}

/// Precomputed Savitzky-Golay weights. Interior channels use the centred
/// window; the first and last `window / 2` channels are evaluated from the
/// polynomial fitted to the `window` samples at that edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SavgolFilter {
    window: usize,
    /// `weights[at]` evaluates the window's polynomial at position `at`.
    weights: Vec<Vec<f64>>,
}

impl SavgolFilter {
    pub fn new(window: usize, order: usize) -> Result<Self> {
        if window % 2 == 0 || order >= window {
            return Err(Error::InvalidArgument(format!(
                "Savitzky-Golay needs an odd window above the order (window {window}, order {order})"
            )));
        }
        let weights = (0..window)
            .map(|at| savgol_coefficients(window, order, at))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { window, weights })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (n, window) = (x.len(), self.window);
        if n < window {
            return Err(Error::InvalidArgument(format!(
                "spectrum of {n} channels is shorter than the {window}-channel window"
            )));
        }
        let half = window / 2;
        let dot = |w: &[f64], xs: &[f64]| w.iter().zip(xs).map(|(c, v)| c * v).sum::<f64>();
        let mut out = vec![0.0; n];
        for i in half..n - half {
            out[i] = dot(&self.weights[half], &x[i - half..=i + half]);
        }
        for at in 0..half {
            out[at] = dot(&self.weights[at], &x[..window]);
            out[n - 1 - at] = dot(&self.weights[window - 1 - at], &x[n - window..]);
        }
        Ok(out)
    }
}

/// Savitzky-Golay smoothing; see [`SavgolFilter`].
pub fn savgol(spectrum: &Spectrum, window: usize, order: usize) -> Result<Spectrum> {
    let values = SavgolFilter::new(window, order)?.apply(&spectrum.values)?;
    Ok(Spectrum {
        grid: spectrum.grid,
        role: spectrum.role,
        values,
    })
}

/// Keeps channels inside `[lo_nm, hi_nm]`.
pub fn crop(spectrum: &Spectrum, lo_nm: f64, hi_nm: f64) -> Result<Spectrum> {
    let range = spectrum.grid.band(lo_nm, hi_nm)?;
    let grid = WavelengthGrid::new(spectrum.grid.wavelength(range.start), spectrum.grid.step_nm, range.len())?;
    Ok(Spectrum {
        grid,
        role: spectrum.role,
        values: spectrum.values[range].to_vec(),
    })
}

/// Channel mean.
pub fn intensity(spectrum: &Spectrum) -> Result<f64> {
    if spectrum.values.is_empty() {
        return Err(Error::Empty("spectrum"));
    }
    Ok(spectrum.values.iter().sum::<f64>() / spectrum.values.len() as f64)
}

/// `mu / |mu|_2`.
pub fn fingerprint(spectrum: &Spectrum) -> Result<Fingerprint> {
    if spectrum.values.is_empty() {
        return Err(Error::Empty("spectrum"));
    }
    let norm = spectrum.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(Fingerprint {
        values: spectrum.values.iter().map(|v| v / norm).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub sg_window: usize,
    pub sg_order: usize,
    pub band_nm: (f64, f64),
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sg_window: 11,
            sg_order: 3,
            band_nm: (468.0, 720.0),
        }
    }
}

impl PipelineConfig {
    /// The fixed processing order, as recorded in run metadata.
    pub const STAGES: [&'static str; 4] = ["calibrate", "savgol", "crop", "decompose"];
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedSpectrum {
    /// Calibrated, smoothed and cropped.
    pub spectrum: Spectrum,
    pub intensity: f64,
    pub fingerprint: Fingerprint,
}

/// calibrate, then smooth, then crop, then split into intensity and fingerprint.
pub fn process(raw: &Spectrum, white: &Spectrum, dark: &Spectrum, config: &PipelineConfig) -> Result<ProcessedSpectrum> {
    Pipeline::new(config)?.run(raw, white, dark)
}

/// [`process`] with the smoothing weights computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    config: PipelineConfig,
    filter: SavgolFilter,
}

impl Pipeline {
    pub fn new(config: &PipelineConfig) -> Result<Self> {
        Ok(Self {
            config: *config,
            filter: SavgolFilter::new(config.sg_window, config.sg_order)?,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn run(&self, raw: &Spectrum, white: &Spectrum, dark: &Spectrum) -> Result<ProcessedSpectrum> {
        let calibrated = calibrate(raw, white, dark)?;
        let smoothed = Spectrum {
            values: self.filter.apply(&calibrated.values)?,
            ..calibrated
        };
        let cropped = crop(&smoothed, self.config.band_nm.0, self.config.band_nm.1)?;
        Ok(ProcessedSpectrum {
            intensity: intensity(&cropped)?,
            fingerprint: fingerprint(&cropped)?,
            spectrum: cropped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStreams;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn grid(n: usize) -> WavelengthGrid {
        WavelengthGrid::new(400.0, 1.0, n).unwrap()
    }

    fn spectrum(values: Vec<f64>) -> Spectrum {
        Spectrum::new(grid(values.len()), SpectrumRole::Raw, values).unwrap()
    }

    #[test]
    fn calibration_identities() {
        let g = grid(50);
        let white = Spectrum::new(g, SpectrumRole::White, (0..50).map(|i| 900.0 + i as f64).collect()).unwrap();
        let dark = Spectrum::new(g, SpectrumRole::Dark, (0..50).map(|i| 40.0 + 0.1 * i as f64).collect()).unwrap();
        let as_raw = |s: &Spectrum| Spectrum {
            role: SpectrumRole::Raw,
            ..s.clone()
        };
        assert!(calibrate(&as_raw(&white), &white, &dark).unwrap().values.iter().all(|&v| v == 1.0));
        assert!(calibrate(&as_raw(&dark), &white, &dark).unwrap().values.iter().all(|&v| v == 0.0));
        let mid = spectrum(white.values.iter().zip(&dark.values).map(|(w, d)| (w + d) / 2.0).collect());
        assert!(calibrate(&mid, &white, &dark).unwrap().values.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn calibration_names_bad_channels() {
        let g = grid(5);
        let white = Spectrum::new(g, SpectrumRole::White, vec![10.0, 1.0, 10.0, 0.5, 10.0]).unwrap();
        let dark = Spectrum::constant(g, SpectrumRole::Dark, 1.0);
        match calibrate(&spectrum(vec![5.0; 5]), &white, &dark) {
            Err(Error::Calibration(ch)) => assert_eq!(ch, vec![1, 3]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn savgol_reproduces_low_order_polynomials() {
        let n = 60;
        for order in 0..=4 {
            let coeffs = [0.3, -1.2, 0.05, 2e-3, -1e-5];
            let values: Vec<f64> = (0..n)
                .map(|i| {
                    let x = i as f64;
                    coeffs[..=order].iter().enumerate().map(|(k, c)| c * x.powi(k as i32)).sum()
                })
                .collect();
            let out = savgol(&spectrum(values.clone()), 11, order.max(3).min(4)).unwrap();
            for (a, b) in out.values.iter().zip(&values) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "order {order}: {a} vs {b}");
            }
        }
        let flat = savgol(&spectrum(vec![4.2; 30]), 11, 3).unwrap();
        assert!(flat.values.iter().all(|v| (v - 4.2).abs() < 1e-12));
    }

    #[test]
    fn savgol_matches_tabulated_weights() {
        // Classic 5-point quadratic smoothing weights: (-3, 12, 17, 12, -3) / 35.
        let c = savgol_coefficients(5, 2, 2).unwrap();
        for (a, b) in c.iter().zip([-3.0, 12.0, 17.0, 12.0, -3.0]) {
            assert!((a - b / 35.0).abs() < 1e-14);
        }
    }

    #[test]
    fn savgol_reduces_white_noise_variance() {
        let mut rng = SeedStreams::new(8).stream("sg", 0);
        let values: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        let out = savgol(&spectrum(values.clone()), 11, 3).unwrap();
        assert!(var(&out.values) < var(&values));
    }

    #[test]
    fn savgol_is_linear() {
        let mut rng = SeedStreams::new(10).stream("sg", 1);
        let x: Vec<f64> = (0..80).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..80).map(|_| rng.gen::<f64>()).collect();
        let (a, b) = (2.5, -0.75);
        let f = SavgolFilter::new(11, 3).unwrap();
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();
        let lhs = f.apply(&mixed).unwrap();
        let (fx, fy) = (f.apply(&x).unwrap(), f.apply(&y).unwrap());
        for i in 0..80 {
            assert!((lhs[i] - (a * fx[i] + b * fy[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn savgol_rejects_bad_windows() {
        let s = spectrum(vec![0.0; 20]);
        assert!(savgol(&s, 10, 3).is_err());
        assert!(savgol(&s, 5, 5).is_err());
        assert!(savgol(&spectrum(vec![0.0; 7]), 11, 3).is_err());
    }

    #[test]
    fn crop_counts_and_idempotence() {
        let full = Spectrum::constant(WavelengthGrid::full(), SpectrumRole::Calibrated, 0.4);
        let once = crop(&full, 468.0, 720.0).unwrap();
        assert_eq!(once.values.len(), 253);
        assert_eq!(once.grid.start_nm, 468.0);
        assert_eq!(once.grid.end_nm(), 720.0);
        assert_eq!(crop(&once, 468.0, 720.0).unwrap(), once);
        assert_eq!(crop(&full, 400.0, 900.0).unwrap(), full);
        assert!(crop(&once, 400.0, 720.0).is_err());
    }

    #[test]
    fn intensity_and_fingerprint_closed_forms() {
        let n = 253;
        let c = 0.37;
        let s = Spectrum::constant(grid(n), SpectrumRole::Calibrated, c);
        assert!((intensity(&s).unwrap() - c).abs() < 1e-15);
        let f = fingerprint(&s).unwrap();
        assert!(f.values.iter().all(|v| (v - 1.0 / (n as f64).sqrt()).abs() < 1e-15));
        assert!(matches!(
            fingerprint(&Spectrum::constant(grid(4), SpectrumRole::Calibrated, 0.0)),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn intensity_and_fingerprint_match_direct_sums() {
        let mut rng = SeedStreams::new(9).stream("fp", 0);
        let values: Vec<f64> = (0..253).map(|_| rng.gen::<f64>()).collect();
        let s = spectrum(values.clone());
        let mut total = 0.0;
        for v in &values {
            total += v;
        }
        assert!((intensity(&s).unwrap() - total / 253.0).abs() < 1e-12);
        let f = fingerprint(&s).unwrap();
        let mut sq = 0.0;
        for v in &f.values {
            sq += v * v;
        }
        assert!((sq.sqrt() - 1.0).abs() < 1e-12);
        let scaled = spectrum(values.iter().map(|v| v * 3.0).collect());
        assert!((intensity(&scaled).unwrap() - 3.0 * intensity(&s).unwrap()).abs() < 1e-12);
        for (a, b) in fingerprint(&scaled).unwrap().values.iter().zip(&f.values) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
