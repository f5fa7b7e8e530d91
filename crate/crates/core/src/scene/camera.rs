//! Pinhole camera with a rigid world-to-camera transform.
//!
//! Camera frame convention: `z` along the optical axis, `x` to the right and
//! `y` downwards in the image, so `u` grows rightwards and `v` downwards.

use nalgebra::{Matrix2x3, Matrix3, Point3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Image coordinates in pixels.
pub type Pixel = Vector2<f64>;

/// Rigid transform mapping world points into the camera frame: `p_c = R p_w + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn apply(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.rotation * p.coords + self.translation
    }

    /// Camera centre expressed in world coordinates.
    pub fn camera_centre(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.inverse() * self.translation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub focal: f64,
    pub principal: Pixel,
    pub width: u32,
    pub height: u32,
    pub world_to_camera: RigidTransform,
}

impl PinholeCamera {
    pub fn new(
        focal: f64,
        principal: Pixel,
        width: u32,
        height: u32,
        world_to_camera: RigidTransform,
    ) -> Result<Self> {
        if !(focal.is_finite() && focal > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal length must be positive, got {focal}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image size must be non-zero".into()));
        }
        Ok(Self {
            focal,
            principal,
            width,
            height,
            world_to_camera,
        })
    }

    /// Camera at `eye` looking at `target`, with `up` fixing the roll.
    pub fn look_at(
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("eye and target coincide".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("up vector is parallel to view".into()))?;
        let down = forward.cross(&right);
        let rows = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let rotation = Rotation3::from_matrix_unchecked(rows);
        let translation = -(rotation * eye.coords);
        let principal = Pixel::new(f64::from(width) / 2.0, f64::from(height) / 2.0);
        Self::new(
            focal,
            principal,
            width,
            height,
            RigidTransform {
                rotation,
                translation,
            },
        )
    }

    pub fn to_camera(&self, p_world: &Point3<f64>) -> Vector3<f64> {
        self.world_to_camera.apply(p_world)
    }

    /// Projects a point given in camera coordinates.
    pub fn project_camera_frame(&self, p_cam: &Vector3<f64>) -> Result<Pixel> {
        if !p_cam.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("camera-frame point"));
        }
        if p_cam.z <= 0.0 {
            return Err(Error::BehindCamera { depth: p_cam.z });
        }
        Ok(Pixel::new(
            self.focal * p_cam.x / p_cam.z + self.principal.x,
            self.focal * p_cam.y / p_cam.z + self.principal.y,
        ))
    }

    pub fn project(&self, p_world: &Point3<f64>) -> Result<Pixel> {
        self.project_camera_frame(&self.to_camera(p_world))
    }

    pub fn contains(&self, px: &Pixel) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x <= f64::from(self.width) && px.y <= f64::from(self.height)
    }

    pub(crate) fn check_in_image(&self, px: &Pixel) -> Result<()> {
        if self.contains(px) {
            Ok(())
        } else {
            Err(Error::OutOfImage {
                u: px.x,
                v: px.y,
                width: self.width,
                height: self.height,
            })
        }
    }

    /// Derivative of the projected pixel with respect to the world point.
    pub fn projection_jacobian(&self, p_world: &Point3<f64>) -> Result<Matrix2x3<f64>> {
        let pc = self.to_camera(p_world);
        if pc.z <= 0.0 {
            return Err(Error::BehindCamera { depth: pc.z });
        }
        let f = self.focal;
        let iz = 1.0 / pc.z;
        let d_cam = Matrix2x3::new(
            f * iz,
            0.0,
            -f * pc.x * iz * iz,
            0.0,
            f * iz,
            -f * pc.y * iz * iz,
        );
        Ok(d_cam * self.world_to_camera.rotation.matrix())
    }

    /// Back-projected viewing ray `(origin, unit direction)` in world coordinates.
    pub fn ray(&self, px: &Pixel) -> (Point3<f64>, Vector3<f64>) {
        let dir_cam = Vector3::new(
            (px.x - self.principal.x) / self.focal,
            (px.y - self.principal.y) / self.focal,
            1.0,
        );
        let dir = self.world_to_camera.rotation.inverse() * dir_cam;
        (self.world_to_camera.camera_centre(), dir.normalize())
    }
}

/// On-disk camera description: intrinsics plus the world-to-camera transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub focal_px: f64,
    pub principal_px: [f64; 2],
    pub width_px: u32,
    pub height_px: u32,
    /// Row-major rotation, world to camera.
    pub rotation: [[f64; 3]; 3],
    /// Translation in mm, world to camera.
    pub translation_mm: [f64; 3],
}

impl From<&PinholeCamera> for CameraSpec {
    fn from(cam: &PinholeCamera) -> Self {
        let m = cam.world_to_camera.rotation.matrix();
        let t = cam.world_to_camera.translation;
        CameraSpec {
            focal_px: cam.focal,
            principal_px: [cam.principal.x, cam.principal.y],
            width_px: cam.width,
            height_px: cam.height,
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            translation_mm: [t.x, t.y, t.z],
        }
    }
}

impl TryFrom<&CameraSpec> for PinholeCamera {
    type Error = Error;

    fn try_from(spec: &CameraSpec) -> Result<Self> {
        let r = &spec.rotation;
        let m = Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        let orthonormal = (m * m.transpose() - Matrix3::identity()).norm() < 1e-9;
        if !orthonormal || m.determinant() <= 0.0 {
            return Err(Error::Format("camera rotation is not a proper rotation".into()));
        }
        PinholeCamera::new(
            spec.focal_px,
            Pixel::new(spec.principal_px[0], spec.principal_px[1]),
            spec.width_px,
            spec.height_px,
            RigidTransform {
                rotation: Rotation3::from_matrix_unchecked(m),
                translation: Vector3::from(spec.translation_mm),
            },
        )
    }
}
