//! Built-in scenes for the four sample types.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};

use super::camera::PinholeCamera;
use super::state::{Scene, WristCamera, DEFAULT_SPEED_LIMIT};
use super::tissue::{Material, TissueSurface};
use crate::error::Result;
use crate::SamplePreset;

pub const DEFAULT_MAX_COMPRESSION: f64 = 3.0;

/// Third-person camera: oblique view of the workspace from the front.
pub fn third_person_camera() -> Result<PinholeCamera> {
    PinholeCamera::look_at(
        Point3::new(0.0, -260.0, 220.0),
        Point3::new(0.0, 0.0, 0.0),
        Vector3::z(),
        600.0,
        640,
        480,
    )
}

pub fn wrist_camera() -> WristCamera {
    WristCamera {
        focal: 300.0,
        width: 320,
        height: 240,
        mount_offset: Vector3::new(0.0, 0.0, 60.0),
    }
}

fn material(name: &str, profile: &str) -> Material {
    Material {
        name: name.to_string(),
        fingerprint: profile.to_string(),
        noise_profile: profile.to_string(),
    }
}

/// Grid covering x in [-80, 80] mm and y in [-60, 60] mm at 2 mm spacing.
const ORIGIN: [f64; 2] = [-80.0, -60.0];
const SPACING: f64 = 2.0;
const NX: usize = 81;
const NY: usize = 61;

/// Low-amplitude relief used for the meat samples.
pub fn relief(amplitude: f64) -> impl Fn(f64, f64) -> f64 {
    move |x, y| amplitude * (2.0 * PI * x / 40.0).sin() * (2.0 * PI * y / 50.0).cos()
}

pub fn scene(preset: SamplePreset) -> Result<Scene> {
    let name = preset.name();
    let tissue = match preset {
        SamplePreset::LiverPhantom | SamplePreset::StomachPhantom => TissueSurface::from_fn(
            ORIGIN,
            SPACING,
            NX,
            NY,
            DEFAULT_MAX_COMPRESSION,
            vec![material(name, name)],
            |_, _| 0.0,
            |_, _| 0,
        )?,
        SamplePreset::RumpSteak => TissueSurface::from_fn(
            ORIGIN,
            SPACING,
            NX,
            NY,
            DEFAULT_MAX_COMPRESSION,
            vec![material("rump_steak_muscle", name), Material {
                name: "rump_steak_fat".into(),
                fingerprint: "rump_steak_fat".into(),
                noise_profile: name.into(),
            }],
            relief(1.0),
            // Fat marbling band across the far edge of the sample.
            |_, y| u16::from(y > 30.0),
        )?,
        SamplePreset::LambLiver => TissueSurface::from_fn(
            ORIGIN,
            SPACING,
            NX,
            NY,
            DEFAULT_MAX_COMPRESSION,
            vec![material(name, name)],
            relief(1.0),
            |_, _| 0,
        )?,
    };
    Ok(Scene {
        tissue,
        third_person: third_person_camera()?,
        wrist: wrist_camera(),
        speed_limit: DEFAULT_SPEED_LIMIT,
    })
}
