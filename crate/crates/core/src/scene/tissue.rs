//! Tissue heightfield with a per-cell material map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into [`TissueSurface::materials`].
pub type MaterialId = u16;

/// A material entry: which optical fingerprint and which height-sensor noise
/// profile apply where this material is under the probe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub name: String,
    pub fingerprint: String,
    pub noise_profile: String,
}

/// Rest height `g(x, y)` on a regular grid, bilinearly interpolated.
///
/// Heights are stored row-major with `x` varying fastest; materials are stored
/// per cell, so there are `(nx - 1) * (ny - 1)` of them.
#[derive(Debug, Clone, PartialEq)]
pub struct TissueSurface {
    origin: [f64; 2],
    spacing: f64,
    nx: usize,
    ny: usize,
    heights: Vec<f64>,
    cell_materials: Vec<MaterialId>,
    max_compression: f64,
    materials: Vec<Material>,
}

impl TissueSurface {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        origin: [f64; 2],
        spacing: f64,
        nx: usize,
        ny: usize,
        heights: Vec<f64>,
        cell_materials: Vec<MaterialId>,
        max_compression: f64,
        materials: Vec<Material>,
    ) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidArgument(format!("grid spacing must be > 0, got {spacing}")));
        }
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidArgument("grid needs at least 2x2 nodes".into()));
        }
        if heights.len() != nx * ny {
            return Err(Error::DimensionMismatch {
                expected: nx * ny,
                got: heights.len(),
            });
        }
        if cell_materials.len() != (nx - 1) * (ny - 1) {
            return Err(Error::DimensionMismatch {
                expected: (nx - 1) * (ny - 1),
                got: cell_materials.len(),
            });
        }
        if heights.iter().any(|h| !h.is_finite()) || origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::NonFinite("tissue heightfield"));
        }
        if !(max_compression.is_finite() && max_compression > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "max_compression must be > 0, got {max_compression}"
            )));
        }
        if let Some(bad) = cell_materials.iter().find(|&&m| usize::from(m) >= materials.len()) {
            return Err(Error::UnknownMaterial(format!("id {bad}")));
        }
        Ok(Self {
            origin,
            spacing,
            nx,
            ny,
            heights,
            cell_materials,
            max_compression,
            materials,
        })
    }

    /// Builds a surface by sampling `height(x, y)` and `material(x, y)` at
    /// nodes and cell centres respectively.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fn(
        origin: [f64; 2],
        spacing: f64,
        nx: usize,
        ny: usize,
        max_compression: f64,
        materials: Vec<Material>,
        height: impl Fn(f64, f64) -> f64,
        material: impl Fn(f64, f64) -> MaterialId,
    ) -> Result<Self> {
        let mut heights = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let x = origin[0] + i as f64 * spacing;
                let y = origin[1] + j as f64 * spacing;
                heights.push(height(x, y));
            }
        }
        let mut cells = Vec::with_capacity((nx.max(1) - 1) * (ny.max(1) - 1));
        for j in 0..ny.saturating_sub(1) {
            for i in 0..nx.saturating_sub(1) {
                let x = origin[0] + (i as f64 + 0.5) * spacing;
                let y = origin[1] + (j as f64 + 0.5) * spacing;
                cells.push(material(x, y));
            }
        }
        Self::new(origin, spacing, nx, ny, heights, cells, max_compression, materials)
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn cell_materials(&self) -> &[MaterialId] {
        &self.cell_materials
    }

    pub fn max_compression(&self) -> f64 {
        self.max_compression
    }

    pub fn materials(&self) -> &[Material] {
        &self.materials
    }

    pub fn material(&self, id: MaterialId) -> Option<&Material> {
        self.materials.get(usize::from(id))
    }

    /// `(x_min, x_max, y_min, y_max)` in mm.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        (
            self.origin[0],
            self.origin[0] + (self.nx - 1) as f64 * self.spacing,
            self.origin[1],
            self.origin[1] + (self.ny - 1) as f64 * self.spacing,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (x0, x1, y0, y1) = self.extent();
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }

    /// Cell indices and fractional offsets inside the cell.
    fn locate(&self, x: f64, y: f64) -> Result<(usize, usize, f64, f64)> {
        if !self.contains(x, y) {
            return Err(Error::OffTissue { x, y });
        }
        let gx = (x - self.origin[0]) / self.spacing;
        let gy = (y - self.origin[1]) / self.spacing;
        let i = (gx.floor() as usize).min(self.nx - 2);
        let j = (gy.floor() as usize).min(self.ny - 2);
        Ok((i, j, gx - i as f64, gy - j as f64))
    }

    fn node(&self, i: usize, j: usize) -> f64 {
        self.heights[j * self.nx + i]
    }

    /// Rest height `g(x, y)` in mm.
    pub fn height_at(&self, x: f64, y: f64) -> Result<f64> {
        let (i, j, fx, fy) = self.locate(x, y)?;
        let h00 = self.node(i, j);
        let h10 = self.node(i + 1, j);
        let h01 = self.node(i, j + 1);
        let h11 = self.node(i + 1, j + 1);
        Ok(h00 * (1.0 - fx) * (1.0 - fy) + h10 * fx * (1.0 - fy) + h01 * (1.0 - fx) * fy + h11 * fx * fy)
    }

    /// Gradient `(dg/dx, dg/dy)` of the bilinear interpolant.
    pub fn gradient_at(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        let (i, j, fx, fy) = self.locate(x, y)?;
        let h00 = self.node(i, j);
        let h10 = self.node(i + 1, j);
        let h01 = self.node(i, j + 1);
        let h11 = self.node(i + 1, j + 1);
        let dx = ((h10 - h00) * (1.0 - fy) + (h11 - h01) * fy) / self.spacing;
        let dy = ((h01 - h00) * (1.0 - fx) + (h11 - h10) * fx) / self.spacing;
        Ok([dx, dy])
    }

    pub fn material_at(&self, x: f64, y: f64) -> Result<MaterialId> {
        let (i, j, _, _) = self.locate(x, y)?;
        Ok(self.cell_materials[j * (self.nx - 1) + i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mats() -> Vec<Material> {
        vec![
            Material {
                name: "a".into(),
                fingerprint: "liver_phantom".into(),
                noise_profile: "liver_phantom".into(),
            },
            Material {
                name: "b".into(),
                fingerprint: "stomach_phantom".into(),
                noise_profile: "stomach_phantom".into(),
            },
        ]
    }

    #[test]
    fn bilinear_reproduces_planes_exactly() {
        let plane = |x: f64, y: f64| 0.3 * x - 0.1 * y + 2.0;
        let s = TissueSurface::from_fn([-10.0, -10.0], 2.5, 9, 9, 3.0, mats(), plane, |_, _| 0).unwrap();
        for &(x, y) in &[(-10.0, -10.0), (0.3, 4.7), (10.0, 10.0), (-3.3, 8.1)] {
            assert!((s.height_at(x, y).unwrap() - plane(x, y)).abs() < 1e-12);
            let g = s.gradient_at(x, y).unwrap();
            assert!((g[0] - 0.3).abs() < 1e-12 && (g[1] + 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_domain_is_off_tissue() {
        let s = TissueSurface::from_fn([0.0, 0.0], 1.0, 3, 3, 3.0, mats(), |_, _| 0.0, |_, _| 0).unwrap();
        assert!(matches!(s.height_at(2.5, 1.0), Err(Error::OffTissue { .. })));
        assert!(s.material_at(-0.1, 0.0).is_err());
    }

    #[test]
    fn material_lookup_by_cell() {
        let s = TissueSurface::from_fn([0.0, 0.0], 1.0, 5, 3, 3.0, mats(), |_, _| 0.0, |x, _| u16::from(x > 2.0)).unwrap();
        assert_eq!(s.material_at(0.5, 0.5).unwrap(), 0);
        assert_eq!(s.material_at(3.5, 1.5).unwrap(), 1);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TissueSurface::new([0.0, 0.0], 0.0, 2, 2, vec![0.0; 4], vec![0], 3.0, mats()).is_err());
        assert!(TissueSurface::new([0.0, 0.0], 1.0, 2, 2, vec![0.0; 3], vec![0], 3.0, mats()).is_err());
        assert!(TissueSurface::new([0.0, 0.0], 1.0, 2, 2, vec![f64::NAN; 4], vec![0], 3.0, mats()).is_err());
        assert!(TissueSurface::new([0.0, 0.0], 1.0, 2, 2, vec![0.0; 4], vec![0], 0.0, mats()).is_err());
        assert!(TissueSurface::new([0.0, 0.0], 1.0, 2, 2, vec![0.0; 4], vec![7], 3.0, mats()).is_err());
    }
}
