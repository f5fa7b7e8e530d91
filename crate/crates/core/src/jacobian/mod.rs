//! Offline estimation of the inverse image Jacobian.
//!
//! Exploration data are clustered in feature space with a Gaussian mixture;
//! each cluster gets a least-squares map from feature velocity to probe
//! velocity, and the maps are blended by a softmax over cluster posteriors.

mod analytic;
pub mod dataset;
mod estimator;
pub mod gmm;
pub mod lls;
pub mod persist;

use nalgebra::Matrix3x4;

pub use analytic::{analytic_inverse_jacobian, interaction_matrix, locate_probe, pseudo_inverse, AnalyticInverseJacobian};
pub use dataset::{collect_dataset, EpisodeSpec, ExcitationPolicy, Sample, TrajectoryDataset};
pub use estimator::{
    baseline_kmeans_lls, fit_gmm_lls, fit_local_maps, softmax, JacobianEstimator, JacobianFitConfig, KMeansLlsEstimator,
    Provenance,
};
pub use gmm::{fit_gmm, GmmFit, GmmFitConfig, GmmModel};
pub use lls::LocalLinearMap;
pub use persist::SavedEstimator;

use crate::error::Result;
use crate::perception::FeatureVector;

/// Anything that maps a feature vector to a 3x4 inverse image Jacobian.
pub trait InverseJacobian: Send + Sync {
    fn inverse_jacobian(&self, s: &FeatureVector) -> Result<Matrix3x4<f64>>;

    fn name(&self) -> &'static str;
}
