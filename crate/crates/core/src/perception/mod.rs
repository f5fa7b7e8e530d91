//! Synthetic sensors standing in for the learned detectors, and the Kalman
//! tracks that smooth and up-sample their output.

mod features;
mod height;
mod kalman;

pub use features::{measure_features, measure_tip, FeatureNoiseModel, FeatureVector, GlareModel};
pub use height::{measure_height, HeightNoise, HeightProfile, HeightSensorModel};
pub use kalman::{KalmanConfig, KalmanEstimate, KalmanTrack};
