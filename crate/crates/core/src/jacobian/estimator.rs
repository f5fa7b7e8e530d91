//! Learned inverse Jacobians: the softmax-blended GMM-LLS estimator and the
//! hard-switching k-means baseline.

use nalgebra::{Matrix3x4, Vector4};
use serde::{Deserialize, Serialize};

use super::dataset::TrajectoryDataset;
use super::gmm::{argmax, fit_gmm, kmeans_pp, nearest, GmmFit, GmmFitConfig, GmmModel};
use super::lls::{fit_maps_for_labels, LocalLinearMap};
use super::InverseJacobian;
use crate::error::{Error, Result};
use crate::perception::FeatureVector;
use crate::rng::{SeedStreams, GMM_INIT};

/// Where a fitted estimator came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub dataset_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianEstimator {
    pub gmm: GmmModel,
    pub maps: Vec<LocalLinearMap>,
    pub temperature: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JacobianFitConfig {
    pub gmm: GmmFitConfig,
    pub temperature: f64,
}

impl Default for JacobianFitConfig {
    fn default() -> Self {
        Self {
            gmm: GmmFitConfig::default(),
            temperature: 1.0,
        }
    }
}

impl JacobianEstimator {
    pub fn new(gmm: GmmModel, maps: Vec<LocalLinearMap>, temperature: f64, provenance: Provenance) -> Result<Self> {
        if gmm.k() != maps.len() {
            return Err(Error::DimensionMismatch {
                expected: gmm.k(),
                got: maps.len(),
            });
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidArgument(format!("softmax temperature must be > 0, got {temperature}")));
        }
        Ok(Self {
            gmm,
            maps,
            temperature,
            provenance,
        })
    }

    pub fn k(&self) -> usize {
        self.maps.len()
    }

    /// `w_k = exp(p_k / tau) / sum_j exp(p_j / tau)` over the posteriors `p_k`.
    pub fn softmax_weights(&self, s: &Vector4<f64>) -> Vec<f64> {
        softmax(&self.gmm.posteriors(s), self.temperature)
    }

    pub fn blend(&self, s: &Vector4<f64>) -> Matrix3x4<f64> {
        self.softmax_weights(s)
            .iter()
            .zip(&self.maps)
            .fold(Matrix3x4::zeros(), |acc, (w, m)| acc + m.x * *w)
    }
}

impl InverseJacobian for JacobianEstimator {
    fn inverse_jacobian(&self, s: &FeatureVector) -> Result<Matrix3x4<f64>> {
        Ok(self.blend(&s.as_vector()))
    }

    fn name(&self) -> &'static str {
        "gmm_lls"
    }
}

pub fn softmax(p: &[f64], temperature: f64) -> Vec<f64> {
    let m = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = p.iter().map(|v| ((v - m) / temperature).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// EM over the dataset's features, then one least-squares map per cluster of
/// hard (argmax) assignments.
pub fn fit_gmm_lls(dataset: &TrajectoryDataset, config: &JacobianFitConfig) -> Result<(JacobianEstimator, GmmFit)> {
    let samples: Vec<_> = dataset.samples().copied().collect();
    let features: Vec<_> = samples.iter().map(|s| s.s).collect();
    let fit = fit_gmm(&features, &config.gmm)?;
    let maps = fit_local_maps(dataset, &fit.model)?;
    let est = JacobianEstimator::new(fit.model.clone(), maps, config.temperature, Provenance {
        seed: config.gmm.seed,
        dataset_fingerprint: dataset.fingerprint(),
    })?;
    Ok((est, fit))
}

pub fn fit_local_maps(dataset: &TrajectoryDataset, gmm: &GmmModel) -> Result<Vec<LocalLinearMap>> {
    let samples: Vec<_> = dataset.samples().copied().collect();
    let labels: Vec<usize> = samples.iter().map(|s| gmm.assign(&s.s)).collect();
    fit_maps_for_labels(&samples, &labels, gmm.k())
}

/// Baseline: k-means partition of feature space, hard switching between maps.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansLlsEstimator {
    pub centroids: Vec<Vector4<f64>>,
    pub maps: Vec<LocalLinearMap>,
    pub provenance: Provenance,
}

impl KMeansLlsEstimator {
    pub fn cluster_of(&self, s: &Vector4<f64>) -> usize {
        nearest(&self.centroids, s)
    }
}

impl InverseJacobian for KMeansLlsEstimator {
    fn inverse_jacobian(&self, s: &FeatureVector) -> Result<Matrix3x4<f64>> {
        Ok(self.maps[self.cluster_of(&s.as_vector())].x)
    }

    fn name(&self) -> &'static str {
        "kmeans_lls"
    }
}

pub fn baseline_kmeans_lls(dataset: &TrajectoryDataset, k: usize, seed: u64) -> Result<KMeansLlsEstimator> {
    let samples: Vec<_> = dataset.samples().copied().collect();
    let features: Vec<_> = samples.iter().map(|s| s.s).collect();
    if k == 0 {
        return Err(Error::InvalidArgument("k-means needs K >= 1".into()));
    }
    if features.len() < 10 * k {
        return Err(Error::InvalidArgument(format!("k-means with K = {k} needs at least {} points", 10 * k)));
    }
    let (centroids, labels) = kmeans(&features, k, seed, 300);
    let maps = fit_maps_for_labels(&samples, &labels, k)?;
    Ok(KMeansLlsEstimator {
        centroids,
        maps,
        provenance: Provenance {
            seed,
            dataset_fingerprint: dataset.fingerprint(),
        },
    })
}

/// Lloyd iterations from k-means++ seeds. Empty clusters take the point
/// farthest from its centroid.
fn kmeans(points: &[Vector4<f64>], k: usize, seed: u64, max_iter: usize) -> (Vec<Vector4<f64>>, Vec<usize>) {
    let mut rng = SeedStreams::new(seed).stream(GMM_INIT, 1);
    let mut centres = kmeans_pp(points, k, &mut rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(&centres, p)).collect();
    for _ in 0..max_iter {
        let mut sums = vec![Vector4::zeros(); k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l] += p;
            counts[l] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centres[j] = sums[j] / counts[j] as f64;
            } else {
                let dists: Vec<f64> = points.iter().zip(&labels).map(|(p, &l)| (p - centres[l]).norm_squared()).collect();
                centres[j] = points[argmax(&dists)];
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(&centres, p)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    (centres, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jacobian::gmm::GaussianComponent;
    use nalgebra::Matrix4;

    fn map(value: f64) -> LocalLinearMap {
        LocalLinearMap {
            x: Matrix3x4::repeat(value),
            residual_rms: 0.0,
            points: 10,
        }
    }

    fn provenance() -> Provenance {
        Provenance {
            seed: 0,
            dataset_fingerprint: String::new(),
        }
    }

    fn two_component(mu1: Vector4<f64>, mu2: Vector4<f64>) -> GmmModel {
        let c = |mean| GaussianComponent {
            weight: 0.5,
            mean,
            covariance: Matrix4::identity(),
        };
        GmmModel::new(vec![c(mu1), c(mu2)]).unwrap()
    }

    #[test]
    fn single_component_is_constant() {
        let gmm = GmmModel::new(vec![GaussianComponent {
            weight: 1.0,
            mean: Vector4::zeros(),
            covariance: Matrix4::identity(),
        }])
        .unwrap();
        let est = JacobianEstimator::new(gmm, vec![map(0.3)], 1.0, provenance()).unwrap();
        for s in [Vector4::zeros(), Vector4::repeat(1e3), Vector4::new(-5.0, 2.0, 0.0, 9.0)] {
            assert_eq!(est.blend(&s), Matrix3x4::repeat(0.3));
        }
    }

    #[test]
    fn equal_posteriors_average_the_maps() {
        let gmm = two_component(Vector4::new(-1.0, 0.0, 0.0, 0.0), Vector4::new(1.0, 0.0, 0.0, 0.0));
        let est = JacobianEstimator::new(gmm, vec![map(1.0), map(3.0)], 1.0, provenance()).unwrap();
        let j = est.blend(&Vector4::zeros());
        assert!((j - Matrix3x4::repeat(2.0)).norm() < 1e-12);
    }

    #[test]
    fn temperature_sharpens_weights() {
        let gmm = two_component(Vector4::new(-1.0, 0.0, 0.0, 0.0), Vector4::new(1.0, 0.0, 0.0, 0.0));
        let s = Vector4::new(0.8, 0.0, 0.0, 0.0);
        let soft = JacobianEstimator::new(gmm.clone(), vec![map(1.0), map(3.0)], 1.0, provenance()).unwrap();
        let sharp = JacobianEstimator::new(gmm, vec![map(1.0), map(3.0)], 0.05, provenance()).unwrap();
        let (ws, wh) = (soft.softmax_weights(&s), sharp.softmax_weights(&s));
        assert!(wh[1] > ws[1] && ws[1] > 0.5);
        assert!(JacobianEstimator::new(soft.gmm.clone(), vec![map(1.0)], 1.0, provenance()).is_err());
        assert!(JacobianEstimator::new(soft.gmm, vec![map(1.0), map(1.0)], 0.0, provenance()).is_err());
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let p = [0.1, 0.7, 0.2];
        let w = softmax(&p, 0.5);
        let z: f64 = p.iter().map(|v| (v / 0.5).exp()).sum();
        for (wi, pi) in w.iter().zip(p) {
            assert!((wi - (pi / 0.5).exp() / z).abs() < 1e-15);
        }
    }
}
