//! Simulated world: probe kinematics, tissue heightfield, contact model and
//! the cameras that provide ground truth for every synthetic sensor.

pub mod camera;
pub mod file;
pub mod presets;
mod state;
pub mod tissue;

pub use camera::{PinholeCamera, Pixel, RigidTransform};
pub use state::{
    CartesianVelocity, ContactState, ProbePose, Scene, SceneState, WristCamera, DEFAULT_SPEED_LIMIT,
};
pub use tissue::{Material, MaterialId, TissueSurface};
