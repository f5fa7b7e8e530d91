//! Closed-form inverse image Jacobian from the simulator's own pinhole model.

use std::sync::Arc;

use nalgebra::{Matrix3, Matrix3x4, Matrix4x3, Point3, SymmetricEigen};

use super::InverseJacobian;
use crate::error::{Error, Result};
use crate::perception::FeatureVector;
use crate::scene::{Scene, SceneState};

/// `d s / d x` at the probe position: tip rows from the projection of the tip,
/// light rows from the projection of the surface point beneath it.
pub fn interaction_matrix(state: &SceneState) -> Result<Matrix4x3<f64>> {
    interaction_at(&state.scene, &state.tip())
}

fn interaction_at(scene: &Scene, tip: &Point3<f64>) -> Result<Matrix4x3<f64>> {
    let cam = &scene.third_person;
    let light = scene.surface_point(tip.x, tip.y)?;
    let [gx, gy] = scene.tissue.gradient_at(tip.x, tip.y)?;
    let j_tip = cam.projection_jacobian(tip)?;
    let lift = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, gx, gy, 0.0);
    let j_light = cam.projection_jacobian(&light)? * lift;
    let mut j = Matrix4x3::zeros();
    j.fixed_view_mut::<2, 3>(0, 0).copy_from(&j_tip);
    j.fixed_view_mut::<2, 3>(2, 0).copy_from(&j_light);
    Ok(j)
}

/// Left pseudo-inverse `(J^T J)^-1 J^T` of a full-column-rank interaction matrix.
pub fn pseudo_inverse(j: &Matrix4x3<f64>) -> Result<Matrix3x4<f64>> {
    let jtj = j.transpose() * j;
    let eig = SymmetricEigen::new(jtj).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > hi * 1e-12) {
        return Err(Error::SingularJacobian);
    }
    let inv = jtj.try_inverse().ok_or(Error::SingularJacobian)?;
    Ok(inv * j.transpose())
}

/// Recovers the probe position that produced `s`: the light centre is cast
/// back onto the surface and the tip is found on the vertical above it.
pub fn locate_probe(scene: &Scene, s: &FeatureVector) -> Result<Point3<f64>> {
    let light = scene.backproject_to_surface(&s.light)?;
    let cam = &scene.third_person;
    let mut z = light.z;
    for _ in 0..50 {
        let p = Point3::new(light.x, light.y, z);
        let r = cam.project(&p)? - s.tip;
        let dz = cam.projection_jacobian(&p)?.column(2).into_owned();
        let step = dz.dot(&r) / dz.norm_squared();
        z -= step;
        if step.abs() < 1e-12 {
            break;
        }
    }
    Ok(Point3::new(light.x, light.y, z))
}

pub fn analytic_inverse_jacobian(scene: &Scene, s: &FeatureVector) -> Result<Matrix3x4<f64>> {
    let tip = locate_probe(scene, s)?;
    pseudo_inverse(&interaction_at(scene, &tip)?)
}

/// The analytic inverse as a controller-facing estimator.
#[derive(Debug, Clone)]
pub struct AnalyticInverseJacobian {
    scene: Arc<Scene>,
}

impl AnalyticInverseJacobian {
    pub fn new(scene: Arc<Scene>) -> Self {
        Self { scene }
    }
}

impl InverseJacobian for AnalyticInverseJacobian {
    fn inverse_jacobian(&self, s: &FeatureVector) -> Result<Matrix3x4<f64>> {
        analytic_inverse_jacobian(&self.scene, s)
    }

    fn name(&self) -> &'static str {
        "analytic"
    }
}
