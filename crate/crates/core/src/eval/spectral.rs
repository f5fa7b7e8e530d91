//! Fingerprint consistency and intensity distributions.

use serde::{Deserialize, Serialize};

use super::stats::percentile;
use crate::error::{Error, Result};
use crate::spectro::Fingerprint;

fn check_same_len(sets: &[&[f64]]) -> Result<usize> {
    let n = sets.first().map_or(0, |s| s.len());
    if n == 0 {
        return Err(Error::Empty("fingerprint"));
    }
    for s in sets {
        if s.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: s.len() });
        }
    }
    Ok(n)
}

/// Channel-wise mean of a set of fingerprints.
pub fn mean_fingerprint(set: &[Fingerprint]) -> Result<Vec<f64>> {
    let first = set.first().ok_or(Error::Empty("fingerprint set"))?;
    let slices: Vec<&[f64]> = set.iter().map(|f| f.values.as_slice()).collect();
    check_same_len(&slices)?;
    let mut m = vec![0.0; first.len()];
    for f in set {
        for (a, v) in m.iter_mut().zip(&f.values) {
            *a += v;
        }
    }
    let n = set.len() as f64;
    Ok(m.into_iter().map(|v| v / n).collect())
}

/// Channel-wise sample standard deviation of a set of fingerprints.
pub fn channel_std(set: &[Fingerprint]) -> Result<Vec<f64>> {
    if set.len() < 2 {
        return Err(Error::Empty("standard deviation needs at least two fingerprints"));
    }
    let m = mean_fingerprint(set)?;
    let mut ss = vec![0.0; m.len()];
    for f in set {
        for ((a, v), mu) in ss.iter_mut().zip(&f.values).zip(&m) {
            *a += (v - mu).powi(2);
        }
    }
    let dof = (set.len() - 1) as f64;
    Ok(ss.into_iter().map(|v| (v / dof).sqrt()).collect())
}

/// Root mean square over channels of `a - b`.
pub fn fingerprint_rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = check_same_len(&[a, b])?;
    Ok((a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64).sqrt())
}

/// Angle between two spectra, radians.
pub fn spectral_angle(a: &[f64], b: &[f64]) -> Result<f64> {
    check_same_len(&[a, b])?;
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0).acos())
}

/// Mean over channels of the per-channel sample standard deviation.
pub fn fingerprint_std(set: &[Fingerprint]) -> Result<f64> {
    let s = channel_std(set)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityHistogram {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    /// Left edge of the first bin.
    pub bin_start: f64,
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl IntensityHistogram {
    pub fn iqr(&self) -> f64 {
        self.p75 - self.p25
    }
}

/// Nearest-rank quartiles and counts in bins of `bin_width` aligned to
/// multiples of the width.
pub fn intensity_histogram(values: &[f64], bin_width: f64) -> Result<IntensityHistogram> {
    if values.is_empty() {
        return Err(Error::Empty("intensity set"));
    }
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::InvalidArgument(format!("bin width must be > 0, got {bin_width}")));
    }
    crate::error::ensure_finite(values, "intensities")?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = (lo / bin_width).floor();
    let bins = ((hi / bin_width).floor() - first) as usize + 1;
    let mut counts = vec![0; bins];
    for v in values {
        let i = ((v / bin_width).floor() - first) as usize;
        counts[i.min(bins - 1)] += 1;
    }
    Ok(IntensityHistogram {
        p25: percentile(values, 25.0)?,
        p50: percentile(values, 50.0)?,
        p75: percentile(values, 75.0)?,
        bin_start: first * bin_width,
        bin_width,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStreams;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn fp(v: &[f64]) -> Fingerprint {
        Fingerprint { values: v.to_vec() }
    }

    #[test]
    fn identical_sets() {
        let set = vec![fp(&[0.6, 0.8]), fp(&[0.8, 0.6])];
        let m = mean_fingerprint(&set).unwrap();
        assert_eq!(fingerprint_rmse(&m, &m).unwrap(), 0.0);
        assert_eq!(spectral_angle(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn orthogonal_vectors() {
        assert!((spectral_angle(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!(matches!(spectral_angle(&[0.0, 0.0], &[0.0, 1.0]), Err(Error::ZeroNorm)));
        assert!(spectral_angle(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn angle_is_symmetric_and_scale_free() {
        let a = [0.3, 0.5, 0.2];
        let b = [0.1, 0.7, 0.4];
        let t = spectral_angle(&a, &b).unwrap();
        assert_eq!(t, spectral_angle(&b, &a).unwrap());
        let a3: Vec<f64> = a.iter().map(|v| 3.0 * v).collect();
        assert!((spectral_angle(&a3, &b).unwrap() - t).abs() < 1e-12);
    }

    #[test]
    fn brute_force_oracle() {
        let mut rng = SeedStreams::new(4).stream("fp", 0);
        let set: Vec<Fingerprint> = (0..7)
            .map(|_| fp(&(0..5).map(|_| rng.gen::<f64>() * 0.1).collect::<Vec<_>>()))
            .collect();
        let other: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() * 0.1).collect();
        // Naive: loop by channel, then by member.
        let mut naive_mean = [0.0; 5];
        let mut naive_std = 0.0;
        for c in 0..5 {
            let col: Vec<f64> = set.iter().map(|f| f.values[c]).collect();
            let mu = col.iter().sum::<f64>() / 7.0;
            naive_mean[c] = mu;
            naive_std += (col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 6.0).sqrt() / 5.0;
        }
        let mut sq = 0.0;
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for c in 0..5 {
            sq += (naive_mean[c] - other[c]).powi(2);
            dot += naive_mean[c] * other[c];
            na += naive_mean[c] * naive_mean[c];
            nb += other[c] * other[c];
        }
        let m = mean_fingerprint(&set).unwrap();
        assert!((fingerprint_rmse(&m, &other).unwrap() - (sq / 5.0).sqrt()).abs() < 1e-12);
        assert!((spectral_angle(&m, &other).unwrap() - (dot / (na * nb).sqrt()).acos()).abs() < 1e-12);
        assert!((fingerprint_std(&set).unwrap() - naive_std).abs() < 1e-12);
    }

    #[test]
    fn histogram_percentiles_and_bins() {
        let c = intensity_histogram(&[0.3; 9], 0.05).unwrap();
        assert_eq!((c.p25, c.p50, c.p75), (0.3, 0.3, 0.3));
        assert_eq!(c.counts.iter().sum::<usize>(), 9);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let h = intensity_histogram(&v, 10.0).unwrap();
        assert_eq!((h.p25, h.p50, h.p75), (25.0, 50.0, 75.0));
        assert_eq!(h.bin_start, 0.0);
        assert_eq!(h.counts.len(), 11);
        assert_eq!(h.counts[0], 9);
        assert_eq!(h.counts[10], 1);
        assert_eq!(h.counts.iter().sum::<usize>(), 100);
        assert!(intensity_histogram(&[], 1.0).is_err());
        assert!(intensity_histogram(&[1.0], 0.0).is_err());
    }
}
