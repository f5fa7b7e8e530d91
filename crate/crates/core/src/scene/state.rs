use std::sync::Arc;

use nalgebra::{Point3, Rotation3, Vector3};

use super::camera::{PinholeCamera, Pixel, RigidTransform};
use super::tissue::{MaterialId, TissueSurface};
use crate::error::{ensure_finite, Error, Result};

/// Default Cartesian speed limit in mm/s.
pub const DEFAULT_SPEED_LIMIT: f64 = 10.0;

/// Probe tip position in the world frame (mm). The probe axis always points
/// straight down, so position is the only degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbePose {
    pub position: Point3<f64>,
}

impl ProbePose {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            position: Point3::new(x, y, z),
        }
    }
}

/// End-effector velocity in mm/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartesianVelocity(pub Vector3<f64>);

impl CartesianVelocity {
    pub const ZERO: CartesianVelocity = CartesianVelocity(Vector3::new(0.0, 0.0, 0.0));

    pub fn new(vx: f64, vy: f64, vz: f64) -> Self {
        Self(Vector3::new(vx, vy, vz))
    }

    pub fn vertical(vz: f64) -> Self {
        Self::new(0.0, 0.0, vz)
    }

    pub fn speed(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Rescales the vector so its norm does not exceed `limit`.
    pub fn clamped(self, limit: f64) -> Self {
        let n = self.0.norm();
        if n > limit && n > 0.0 {
            Self(self.0 * (limit / n))
        } else {
            self
        }
    }
}

/// Signed gap between tip and rest surface (positive above, negative when
/// compressing) and the material under the tip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactState {
    pub h: f64,
    pub material: MaterialId,
}

/// Camera rigidly attached to the probe, looking straight down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WristCamera {
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    /// Camera centre relative to the probe tip, mm.
    pub mount_offset: Vector3<f64>,
}

impl WristCamera {
    /// The posed camera for a given tip position.
    pub fn posed(&self, tip: &Point3<f64>) -> Result<PinholeCamera> {
        // Looking along -z with image x along world +x.
        let rotation = Rotation3::from_matrix_unchecked(nalgebra::Matrix3::new(
            1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0,
        ));
        let centre = tip.coords + self.mount_offset;
        PinholeCamera::new(
            self.focal,
            Pixel::new(f64::from(self.width) / 2.0, f64::from(self.height) / 2.0),
            self.width,
            self.height,
            RigidTransform {
                rotation,
                translation: -(rotation * centre),
            },
        )
    }
}

/// Static world description: tissue, cameras, kinematic limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub tissue: TissueSurface,
    pub third_person: PinholeCamera,
    pub wrist: WristCamera,
    pub speed_limit: f64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed_limit.is_finite() && self.speed_limit > 0.0) {
            return Err(Error::InvalidArgument("speed limit must be > 0".into()));
        }
        Ok(())
    }

    /// Surface point `(x, y, g(x, y))`.
    pub fn surface_point(&self, x: f64, y: f64) -> Result<Point3<f64>> {
        Ok(Point3::new(x, y, self.tissue.height_at(x, y)?))
    }

    /// Intersects a third-person viewing ray with the rest surface.
    pub fn backproject_to_surface(&self, px: &Pixel) -> Result<Point3<f64>> {
        let (origin, dir) = self.third_person.ray(px);
        // Signed height of the ray above the surface; negative once it dips below.
        let above = |t: f64| -> Result<f64> {
            let p = origin + dir * t;
            Ok(p.z - self.tissue.height_at(p.x, p.y)?)
        };
        if dir.z >= 0.0 {
            return Err(Error::InvalidArgument("viewing ray does not descend".into()));
        }
        // Bracket the crossing with the ray's intersection with z = const planes
        // spanning the surface's height range.
        let (zmin, zmax) = self
            .tissue
            .heights()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &h| (a.min(h), b.max(h)));
        let mut lo = (zmax + 1e-6 - origin.z) / dir.z;
        let mut hi = (zmin - 1e-6 - origin.z) / dir.z;
        if above(lo)? < 0.0 || above(hi)? > 0.0 {
            return Err(Error::InvalidArgument("viewing ray does not cross the surface".into()));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if above(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        Ok(origin + dir * (0.5 * (lo + hi)))
    }
}

/// Probe pose at a point in time within a fixed scene. Cloning is cheap; the
/// scene is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub scene: Arc<Scene>,
    pub probe: ProbePose,
    pub time: f64,
}

impl SceneState {
    pub fn new(scene: Arc<Scene>, probe: ProbePose) -> Self {
        Self {
            scene,
            probe,
            time: 0.0,
        }
    }

    /// Probe placed `h` mm above the rest surface at `(x, y)`.
    pub fn at_height(scene: Arc<Scene>, x: f64, y: f64, h: f64) -> Result<Self> {
        let g = scene.tissue.height_at(x, y)?;
        Ok(Self::new(scene, ProbePose::new(x, y, g + h)))
    }

    pub fn tip(&self) -> Point3<f64> {
        self.probe.position
    }

    /// Integrates `v` (after the speed clamp) over `dt`, clamping the tip so it
    /// never compresses the tissue by more than `max_compression`.
    pub fn step(&self, v: CartesianVelocity, dt: f64) -> Result<SceneState> {
        ensure_finite(v.0.as_slice(), "velocity command")?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        let v = v.clamped(self.scene.speed_limit);
        let mut p = self.probe.position + v.0 * dt;
        let tissue = &self.scene.tissue;
        if tissue.contains(p.x, p.y) {
            let floor = tissue.height_at(p.x, p.y)? - tissue.max_compression();
            if p.z < floor {
                p.z = floor;
            }
        }
        Ok(SceneState {
            scene: Arc::clone(&self.scene),
            probe: ProbePose { position: p },
            time: self.time + dt,
        })
    }

    pub fn contact_height(&self) -> Result<ContactState> {
        let p = self.probe.position;
        let tissue = &self.scene.tissue;
        let g = tissue.height_at(p.x, p.y)?;
        Ok(ContactState {
            h: p.z - g,
            material: tissue.material_at(p.x, p.y)?,
        })
    }

    /// The surface point lit by the probe: directly beneath the tip.
    pub fn light_point(&self) -> Result<Point3<f64>> {
        let p = self.probe.position;
        self.scene.surface_point(p.x, p.y)
    }

    /// Noise-free probe-tip and light-centre pixels in the third-person image.
    pub fn ground_truth_features(&self) -> Result<(Pixel, Pixel)> {
        let cam = &self.scene.third_person;
        let tip = cam.project(&self.probe.position)?;
        let light = cam.project(&self.light_point()?)?;
        cam.check_in_image(&tip)?;
        cam.check_in_image(&light)?;
        Ok((tip, light))
    }

    pub fn wrist_camera(&self) -> Result<PinholeCamera> {
        self.scene.wrist.posed(&self.probe.position)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::presets;
    use crate::SamplePreset;

    fn flat() -> Arc<Scene> {
        Arc::new(presets::scene(SamplePreset::LiverPhantom).unwrap())
    }

    #[test]
    fn zero_velocity_is_identity() {
        let s = SceneState::at_height(flat(), 3.0, -2.0, 7.0).unwrap();
        let n = s.step(CartesianVelocity::ZERO, 0.37).unwrap();
        assert_eq!(n.probe, s.probe);
    }

    #[test]
    fn linear_height_integration() {
        let s = SceneState::at_height(flat(), 0.0, 0.0, 0.5).unwrap();
        let n = s.step(CartesianVelocity::vertical(-1.0), 0.1).unwrap();
        assert!((n.contact_height().unwrap().h - 0.4).abs() < 1e-12);
    }

    #[test]
    fn compression_clamp_holds() {
        let scene = flat();
        let maxc = scene.tissue.max_compression();
        let s = SceneState::at_height(scene, 0.0, 0.0, -maxc).unwrap();
        let n = s.step(CartesianVelocity::vertical(-5.0), 0.1).unwrap();
        assert_eq!(n.contact_height().unwrap().h, -maxc);
        let deep = SceneState::at_height(flat(), 1.0, 1.0, 0.0)
            .unwrap()
            .step(CartesianVelocity::vertical(-10.0), 1.0)
            .unwrap();
        assert_eq!(deep.contact_height().unwrap().h, -3.0);
    }

    #[test]
    fn speed_limit_applies_before_integration() {
        let s = SceneState::at_height(flat(), 0.0, 0.0, 10.0).unwrap();
        let n = s.step(CartesianVelocity::new(30.0, 40.0, 0.0), 0.1).unwrap();
        let moved = n.probe.position - s.probe.position;
        assert!((moved.norm() - 1.0).abs() < 1e-12);
        assert!((moved.x - 0.6).abs() < 1e-12);
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let s = SceneState::at_height(flat(), 0.0, 0.0, 5.0).unwrap();
        assert!(matches!(
            s.step(CartesianVelocity::new(f64::NAN, 0.0, 0.0), 0.1),
            Err(Error::NonFinite(_))
        ));
        assert!(s.step(CartesianVelocity::ZERO, 0.0).is_err());
        assert!(s.step(CartesianVelocity::ZERO, f64::INFINITY).is_err());
    }

    #[test]
    fn contact_height_cases() {
        let scene = flat();
        let at = |h| SceneState::at_height(Arc::clone(&scene), 4.0, 4.0, h).unwrap();
        assert_eq!(at(0.0).contact_height().unwrap().h, 0.0);
        assert!((at(40.0).contact_height().unwrap().h - 40.0).abs() < 1e-12);
        let off = SceneState::new(Arc::clone(&scene), ProbePose::new(500.0, 0.0, 10.0));
        assert!(matches!(off.contact_height(), Err(Error::OffTissue { .. })));
    }

    #[test]
    fn features_coincide_at_contact() {
        let s = SceneState::at_height(flat(), 6.0, -3.0, 0.0).unwrap();
        let (tip, light) = s.ground_truth_features().unwrap();
        assert!((tip - light).norm() < 1e-12);
    }

    #[test]
    fn gap_gives_vertical_parallax() {
        let scene = flat();
        let s = SceneState::at_height(Arc::clone(&scene), 0.0, 0.0, 20.0).unwrap();
        let (tip, light) = s.ground_truth_features().unwrap();
        // Closed form: both points projected by hand through the camera.
        let cam = &scene.third_person;
        let manual = |p: Point3<f64>| {
            let pc = cam.world_to_camera.rotation * p.coords + cam.world_to_camera.translation;
            Pixel::new(cam.focal * pc.x / pc.z + cam.principal.x, cam.focal * pc.y / pc.z + cam.principal.y)
        };
        let tip_expected = manual(Point3::new(0.0, 0.0, 20.0));
        let light_expected = manual(Point3::new(0.0, 0.0, 0.0));
        assert!((tip - tip_expected).norm() < 1e-9);
        assert!((light - light_expected).norm() < 1e-9);
        // The camera sits on the x = 0 plane, so the parallax is purely vertical.
        assert!((tip.x - light.x).abs() < 1e-9);
        assert!(tip.y < light.y - 5.0);
    }

    #[test]
    fn wrist_camera_sees_light_point_at_centre() {
        let scene = flat();
        for (x, y) in [(0.0, 0.0), (12.0, -7.0)] {
            let s = SceneState::at_height(Arc::clone(&scene), x, y, 5.0).unwrap();
            let cam = s.wrist_camera().unwrap();
            let px = cam.project(&s.light_point().unwrap()).unwrap();
            assert!((px - cam.principal).norm() < 1e-9);
        }
    }

    #[test]
    fn backprojection_inverts_projection() {
        let scene = Arc::new(presets::scene(SamplePreset::LambLiver).unwrap());
        for (x, y) in [(0.0, 0.0), (-31.0, 12.5), (44.0, -20.0)] {
            let p = scene.surface_point(x, y).unwrap();
            let px = scene.third_person.project(&p).unwrap();
            let back = scene.backproject_to_surface(&px).unwrap();
            assert!((back - p).norm() < 1e-6, "{back} vs {p}");
        }
    }
}
