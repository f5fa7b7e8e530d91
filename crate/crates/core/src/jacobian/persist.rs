//! JSON estimator files. Floats are written with shortest round-trip
//! formatting, so save followed by load reproduces every bit.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3x4, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::estimator::{JacobianEstimator, KMeansLlsEstimator, Provenance};
use super::gmm::{GaussianComponent, GmmModel};
use super::lls::LocalLinearMap;
use crate::error::{Error, Result};

pub const ESTIMATOR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    GmmLls,
    KmeansLls,
}

/// On-disk layout. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorFile {
    pub format_version: u32,
    pub kind: EstimatorKind,
    pub k: usize,
    /// Softmax temperature; absent for the hard-switching baseline.
    pub temperature: Option<f64>,
    /// Mixture weights; empty for the baseline.
    pub weights: Vec<f64>,
    /// Component means, or k-means centroids.
    pub means: Vec<[f64; 4]>,
    /// Component covariances; empty for the baseline.
    pub covariances: Vec<[f64; 16]>,
    pub maps: Vec<[f64; 12]>,
    pub residual_rms: Vec<f64>,
    pub cluster_points: Vec<usize>,
    pub seed: u64,
    pub dataset_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SavedEstimator {
    GmmLls(JacobianEstimator),
    KmeansLls(KMeansLlsEstimator),
}

fn row_major_3x4(m: &Matrix3x4<f64>) -> [f64; 12] {
    std::array::from_fn(|i| m[(i / 4, i % 4)])
}

fn row_major_4x4(m: &Matrix4<f64>) -> [f64; 16] {
    std::array::from_fn(|i| m[(i / 4, i % 4)])
}

fn maps_to_file(maps: &[LocalLinearMap]) -> (Vec<[f64; 12]>, Vec<f64>, Vec<usize>) {
    (
        maps.iter().map(|m| row_major_3x4(&m.x)).collect(),
        maps.iter().map(|m| m.residual_rms).collect(),
        maps.iter().map(|m| m.points).collect(),
    )
}

impl From<&JacobianEstimator> for EstimatorFile {
    fn from(est: &JacobianEstimator) -> Self {
        let comps = est.gmm.components();
        let (maps, residual_rms, cluster_points) = maps_to_file(&est.maps);
        Self {
            format_version: ESTIMATOR_FORMAT_VERSION,
            kind: EstimatorKind::GmmLls,
            k: est.k(),
            temperature: Some(est.temperature),
            weights: comps.iter().map(|c| c.weight).collect(),
            means: comps.iter().map(|c| c.mean.into()).collect(),
            covariances: comps.iter().map(|c| row_major_4x4(&c.covariance)).collect(),
            maps,
            residual_rms,
            cluster_points,
            seed: est.provenance.seed,
            dataset_fingerprint: est.provenance.dataset_fingerprint.clone(),
        }
    }
}

impl From<&KMeansLlsEstimator> for EstimatorFile {
    fn from(est: &KMeansLlsEstimator) -> Self {
        let (maps, residual_rms, cluster_points) = maps_to_file(&est.maps);
        Self {
            format_version: ESTIMATOR_FORMAT_VERSION,
            kind: EstimatorKind::KmeansLls,
            k: est.maps.len(),
            temperature: None,
            weights: Vec::new(),
            means: est.centroids.iter().map(|c| (*c).into()).collect(),
            covariances: Vec::new(),
            maps,
            residual_rms,
            cluster_points,
            seed: est.provenance.seed,
            dataset_fingerprint: est.provenance.dataset_fingerprint.clone(),
        }
    }
}

impl TryFrom<EstimatorFile> for SavedEstimator {
    type Error = Error;

    fn try_from(f: EstimatorFile) -> Result<Self> {
        if f.format_version != ESTIMATOR_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported estimator format_version {} (expected {ESTIMATOR_FORMAT_VERSION})",
                f.format_version
            )));
        }
        let check = |name: &str, len: usize| {
            if len == f.k {
                Ok(())
            } else {
                Err(Error::Format(format!("estimator has k = {} but {len} {name}", f.k)))
            }
        };
        check("maps", f.maps.len())?;
        check("means", f.means.len())?;
        check("residuals", f.residual_rms.len())?;
        check("cluster sizes", f.cluster_points.len())?;
        let maps: Vec<LocalLinearMap> = f
            .maps
            .iter()
            .zip(&f.residual_rms)
            .zip(&f.cluster_points)
            .map(|((m, &r), &n)| LocalLinearMap {
                x: Matrix3x4::from_row_slice(m),
                residual_rms: r,
                points: n,
            })
            .collect();
        let provenance = Provenance {
            seed: f.seed,
            dataset_fingerprint: f.dataset_fingerprint.clone(),
        };
        match f.kind {
            EstimatorKind::GmmLls => {
                check("weights", f.weights.len())?;
                check("covariances", f.covariances.len())?;
                let components = (0..f.k)
                    .map(|i| GaussianComponent {
                        weight: f.weights[i],
                        mean: Vector4::from(f.means[i]),
                        covariance: Matrix4::from_row_slice(&f.covariances[i]),
                    })
                    .collect();
                let temperature = f
                    .temperature
                    .ok_or_else(|| Error::Format("GMM-LLS estimator is missing its temperature".into()))?;
                Ok(SavedEstimator::GmmLls(JacobianEstimator::new(
                    GmmModel::new(components)?,
                    maps,
                    temperature,
                    provenance,
                )?))
            }
            EstimatorKind::KmeansLls => Ok(SavedEstimator::KmeansLls(KMeansLlsEstimator {
                centroids: f.means.iter().map(|m| Vector4::from(*m)).collect(),
                maps,
                provenance,
            })),
        }
    }
}

impl SavedEstimator {
    pub fn to_file(&self) -> EstimatorFile {
        match self {
            SavedEstimator::GmmLls(e) => e.into(),
            SavedEstimator::KmeansLls(e) => e.into(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EstimatorFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn as_inverse_jacobian(&self) -> &dyn super::InverseJacobian {
        match self {
            SavedEstimator::GmmLls(e) => e,
            SavedEstimator::KmeansLls(e) => e,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStreams;
    use rand::Rng;

    fn random_estimator(seed: u64) -> JacobianEstimator {
        let mut rng = SeedStreams::new(seed).stream("persist", 0);
        let mut r = || rng.gen::<f64>() * 2.0 - 1.0;
        let k = 3;
        let components = (0..k)
            .map(|i| {
                let a = Matrix4::from_fn(|_, _| r());
                GaussianComponent {
                    weight: [0.2, 0.3, 0.5][i],
                    mean: Vector4::from_fn(|_, _| r() * 300.0),
                    covariance: a * a.transpose() + Matrix4::identity() * 1e-3,
                }
            })
            .collect();
        let maps = (0..k)
            .map(|_| LocalLinearMap {
                x: Matrix3x4::from_fn(|_, _| r() / 3.0),
                residual_rms: r().abs() * 1e-7,
                points: 100,
            })
            .collect();
        JacobianEstimator::new(GmmModel::new(components).unwrap(), maps, 0.7, Provenance {
            seed,
            dataset_fingerprint: "ab".repeat(20),
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let saved = SavedEstimator::GmmLls(random_estimator(3));
        let text = saved.to_json().unwrap();
        let back = SavedEstimator::from_json(&text).unwrap();
        assert_eq!(back, saved);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn baseline_round_trip() {
        let est = random_estimator(4);
        let saved = SavedEstimator::KmeansLls(KMeansLlsEstimator {
            centroids: est.gmm.components().iter().map(|c| c.mean).collect(),
            maps: est.maps.clone(),
            provenance: est.provenance.clone(),
        });
        let back = SavedEstimator::from_json(&saved.to_json().unwrap()).unwrap();
        assert_eq!(back, saved);
    }

    #[test]
    fn rejects_inconsistent_files() {
        let mut f = EstimatorFile::from(&random_estimator(5));
        f.maps.pop();
        assert!(SavedEstimator::try_from(f).is_err());
        let mut f = EstimatorFile::from(&random_estimator(5));
        f.format_version = 99;
        assert!(SavedEstimator::try_from(f).is_err());
        let text = SavedEstimator::GmmLls(random_estimator(5)).to_json().unwrap();
        let tampered = text.replacen("{", "{\n  \"extra\": 1,", 1);
        assert!(SavedEstimator::from_json(&tampered).is_err());
    }
}
