//! Versioned TOML scene description.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::camera::{CameraSpec, PinholeCamera};
use super::state::{Scene, WristCamera};
use super::tissue::{Material, MaterialId, TissueSurface};
use crate::error::{Error, Result};

pub const SCENE_FORMAT_VERSION: u32 = 1;

const HEADER: &str = "\
# drs-scan scene description
# Units: lengths in mm, image coordinates in px, time in s, speeds in mm/s.
# World frame: x, y span the tissue plane, z points up.
# tissue.heights_mm holds ny rows of nx rest heights (x varies fastest).
# tissue.cell_materials holds ny-1 rows of nx-1 material indices into [[materials]].
# Camera rotation/translation map world points into the camera frame
# (x right, y down, z along the optical axis).
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub format_version: u32,
    pub speed_limit_mm_s: f64,
    pub tissue: TissueSpec,
    pub materials: Vec<Material>,
    pub third_person_camera: CameraSpec,
    pub wrist_camera: WristSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueSpec {
    pub origin_mm: [f64; 2],
    pub spacing_mm: f64,
    pub nx: usize,
    pub ny: usize,
    pub max_compression_mm: f64,
    pub heights_mm: Vec<Vec<f64>>,
    pub cell_materials: Vec<Vec<MaterialId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WristSpec {
    pub focal_px: f64,
    pub width_px: u32,
    pub height_px: u32,
    pub mount_offset_mm: [f64; 3],
}

impl From<&Scene> for SceneFile {
    fn from(scene: &Scene) -> Self {
        let t = &scene.tissue;
        let (nx, ny) = t.dims();
        SceneFile {
            format_version: SCENE_FORMAT_VERSION,
            speed_limit_mm_s: scene.speed_limit,
            tissue: TissueSpec {
                origin_mm: t.origin(),
                spacing_mm: t.spacing(),
                nx,
                ny,
                max_compression_mm: t.max_compression(),
                heights_mm: t.heights().chunks(nx).map(<[f64]>::to_vec).collect(),
                cell_materials: t.cell_materials().chunks(nx - 1).map(<[u16]>::to_vec).collect(),
            },
            materials: t.materials().to_vec(),
            third_person_camera: CameraSpec::from(&scene.third_person),
            wrist_camera: WristSpec {
                focal_px: scene.wrist.focal,
                width_px: scene.wrist.width,
                height_px: scene.wrist.height,
                mount_offset_mm: scene.wrist.mount_offset.into(),
            },
        }
    }
}

impl TryFrom<SceneFile> for Scene {
    type Error = Error;

    fn try_from(file: SceneFile) -> Result<Self> {
        if file.format_version != SCENE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported scene format_version {} (expected {SCENE_FORMAT_VERSION})",
                file.format_version
            )));
        }
        let t = file.tissue;
        if t.heights_mm.iter().any(|row| row.len() != t.nx) || t.heights_mm.len() != t.ny {
            return Err(Error::Format("heights_mm must be ny rows of nx values".into()));
        }
        if t.nx < 2
            || t.ny < 2
            || t.cell_materials.len() != t.ny - 1
            || t.cell_materials.iter().any(|row| row.len() != t.nx - 1)
        {
            return Err(Error::Format("cell_materials must be ny-1 rows of nx-1 values".into()));
        }
        let tissue = TissueSurface::new(
            t.origin_mm,
            t.spacing_mm,
            t.nx,
            t.ny,
            t.heights_mm.into_iter().flatten().collect(),
            t.cell_materials.into_iter().flatten().collect(),
            t.max_compression_mm,
            file.materials,
        )?;
        if !(file.wrist_camera.focal_px > 0.0) {
            return Err(Error::Format("wrist camera focal length must be > 0".into()));
        }
        let scene = Scene {
            tissue,
            third_person: PinholeCamera::try_from(&file.third_person_camera)?,
            wrist: WristCamera {
                focal: file.wrist_camera.focal_px,
                width: file.wrist_camera.width_px,
                height: file.wrist_camera.height_px,
                mount_offset: Vector3::from(file.wrist_camera.mount_offset_mm),
            },
            speed_limit: file.speed_limit_mm_s,
        };
        scene.validate()?;
        Ok(scene)
    }
}

pub fn to_toml_string(scene: &Scene) -> Result<String> {
    Ok(format!("{HEADER}{}", toml::to_string(&SceneFile::from(scene))?))
}

pub fn from_toml_str(text: &str) -> Result<Scene> {
    let file: SceneFile = toml::from_str(text)?;
    Scene::try_from(file)
}

pub fn save(scene: &Scene, path: &Path) -> Result<()> {
    std::fs::write(path, to_toml_string(scene)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Scene> {
    from_toml_str(&std::fs::read_to_string(path)?)
}
