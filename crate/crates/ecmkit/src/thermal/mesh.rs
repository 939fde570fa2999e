//! Axisymmetric structured finite-volume mesh over a cylindrical cell.
//!
//! Cells are uniform in radius and height; cell (i, j) spans
//! [i·dr, (i+1)·dr] × [j·dz, (j+1)·dz] and is indexed `j·n_r + i`, which
//! keeps the linear systems' bandwidth at `n_r`. Because the discretization
//! is axisymmetric by construction, axisymmetric inputs always produce
//! axisymmetric fields.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::cell::CellSpec;
use crate::error::{Error, Result};

/// What a mesh cell is made of. Tabs are passive end zones that carry the
/// potential references; electrochemistry happens in the active zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    Active,
    PositiveTab,
    NegativeTab,
}

/// Uniform axisymmetric (r, z) grid with a zone tag per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylMesh {
    n_r: usize,
    n_z: usize,
    radius_m: f64,
    height_m: f64,
    zones: Vec<Zone>,
}

impl CylMesh {
    /// Mesh with the default zone layout: the bottom cell layer is the
    /// negative tab, the top layer the positive tab, everything else active.
    pub fn uniform(n_r: usize, n_z: usize, radius_m: f64, height_m: f64) -> Result<Self> {
        let zones = (0..n_r * n_z)
            .map(|k| match k / n_r.max(1) {
                0 => Zone::NegativeTab,
                j if j == n_z - 1 => Zone::PositiveTab,
                _ => Zone::Active,
            })
            .collect();
        Self::with_zones(n_r, n_z, radius_m, height_m, zones)
    }

    /// Mesh with caller-supplied zone tags (one per cell, `j·n_r + i` order).
    pub fn with_zones(
        n_r: usize,
        n_z: usize,
        radius_m: f64,
        height_m: f64,
        zones: Vec<Zone>,
    ) -> Result<Self> {
        if n_r < 1 || n_z < 2 {
            return Err(Error::Config(format!(
                "mesh needs at least 1 radial and 2 axial cells, got {n_r}x{n_z}"
            )));
        }
        if !(radius_m > 0.0 && radius_m.is_finite() && height_m > 0.0 && height_m.is_finite()) {
            return Err(Error::Config(format!(
                "mesh extent must be positive and finite, got radius {radius_m} m, height {height_m} m"
            )));
        }
        if zones.len() != n_r * n_z {
            return Err(Error::Config(format!(
                "zone tags cover {} cells but the mesh has {}",
                zones.len(),
                n_r * n_z
            )));
        }
        Ok(CylMesh { n_r, n_z, radius_m, height_m, zones })
    }

    /// Default-layout mesh matching a cell's geometry.
    pub fn for_cell(spec: &CellSpec, n_r: usize, n_z: usize) -> Result<Self> {
        Self::uniform(n_r, n_z, spec.radius_m(), spec.height_m)
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn height_m(&self) -> f64 {
        self.height_m
    }

    pub fn n_cells(&self) -> usize {
        self.n_r * self.n_z
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn zone(&self, cell: usize) -> Zone {
        self.zones[cell]
    }

    pub fn dr(&self) -> f64 {
        self.radius_m / self.n_r as f64
    }

    pub fn dz(&self) -> f64 {
        self.height_m / self.n_z as f64
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_r && j < self.n_z);
        j * self.n_r + i
    }

    /// (radial, axial) cell coordinates of a linear index.
    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.n_r, cell / self.n_r)
    }

    pub fn r_center_m(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dr()
    }

    pub fn z_center_m(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dz()
    }

    /// Volume of any cell in radial ring `i` (annulus cross-section × dz).
    pub fn cell_volume_m3(&self, i: usize) -> f64 {
        let dr = self.dr();
        let (r_in, r_out) = (i as f64 * dr, (i + 1) as f64 * dr);
        PI * (r_out * r_out - r_in * r_in) * self.dz()
    }

    /// Per-cell volumes in linear-index order.
    pub fn volumes_m3(&self) -> Vec<f64> {
        let ring: Vec<f64> = (0..self.n_r).map(|i| self.cell_volume_m3(i)).collect();
        (0..self.n_cells()).map(|k| ring[k % self.n_r]).collect()
    }

    pub fn total_volume_m3(&self) -> f64 {
        self.volumes_m3().iter().sum()
    }

    /// Combined volume of all active-zone cells.
    pub fn active_volume_m3(&self) -> f64 {
        self.volumes_m3()
            .iter()
            .zip(&self.zones)
            .filter(|(_, z)| **z == Zone::Active)
            .map(|(v, _)| v)
            .sum()
    }

    /// Area of the cylindrical face at radial face index `i` (0 ..= n_r),
    /// per axial layer. Face 0 sits on the axis and has zero area.
    pub fn radial_face_area_m2(&self, i: usize) -> f64 {
        2.0 * PI * (i as f64 * self.dr()) * self.dz()
    }

    /// Area of the flat axial face of a ring-`i` cell (same for top/bottom).
    pub fn axial_face_area_m2(&self, i: usize) -> f64 {
        self.cell_volume_m3(i) / self.dz()
    }

    /// Total exterior surface area (side plus both end discs).
    pub fn surface_area_m2(&self) -> f64 {
        2.0 * PI * self.radius_m * self.height_m + 2.0 * PI * self.radius_m * self.radius_m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn cell_volumes_sum_to_the_cylinder() {
        for (n_r, n_z) in [(1, 2), (3, 7), (20, 60)] {
            let mesh = CylMesh::uniform(n_r, n_z, 7.25e-3, 50.5e-3).unwrap();
            let total = mesh.total_volume_m3();
            let exact = PI * 7.25e-3 * 7.25e-3 * 50.5e-3;
            assert!(
                (total - exact).abs() <= 1e-12 * exact,
                "{n_r}x{n_z}: {total} vs {exact}"
            );
        }
    }

    #[test]
    fn default_zone_layout_marks_the_end_layers_as_tabs() {
        let mesh = CylMesh::uniform(4, 5, 0.01, 0.05).unwrap();
        for i in 0..4 {
            assert_eq!(mesh.zone(mesh.index(i, 0)), Zone::NegativeTab);
            assert_eq!(mesh.zone(mesh.index(i, 4)), Zone::PositiveTab);
            for j in 1..4 {
                assert_eq!(mesh.zone(mesh.index(i, j)), Zone::Active);
            }
        }
        let v = mesh.total_volume_m3();
        assert!((mesh.active_volume_m3() - v * 3.0 / 5.0).abs() < 1e-12 * v);
    }

    #[test]
    fn indexing_round_trips_and_geometry_is_consistent() {
        let mesh = CylMesh::uniform(5, 9, 0.02, 0.08).unwrap();
        for j in 0..9 {
            for i in 0..5 {
                assert_eq!(mesh.coords(mesh.index(i, j)), (i, j));
            }
        }
        assert_eq!(mesh.radial_face_area_m2(0), 0.0);
        // A cell's volume equals its axial face area times dz.
        for i in 0..5 {
            let v = mesh.axial_face_area_m2(i) * mesh.dz();
            assert!((v - mesh.cell_volume_m3(i)).abs() < 1e-18);
        }
        // Mesh surface matches the analytic cylinder surface.
        let exact = 2.0 * PI * 0.02 * 0.08 + 2.0 * PI * 0.02 * 0.02;
        assert!((mesh.surface_area_m2() - exact).abs() < 1e-15);
    }

    #[test]
    fn geometry_mismatching_the_cell_is_catchable() {
        let spec = presets::lifes2_aa_cell();
        let mesh = CylMesh::for_cell(&spec, 4, 6).unwrap();
        assert!((mesh.radius_m() - spec.radius_m()).abs() < 1e-15);
        assert!((mesh.height_m() - spec.height_m).abs() < 1e-15);
    }

    #[test]
    fn degenerate_meshes_are_rejected() {
        assert!(CylMesh::uniform(0, 5, 0.01, 0.05).is_err());
        assert!(CylMesh::uniform(3, 1, 0.01, 0.05).is_err());
        assert!(CylMesh::uniform(3, 5, -0.01, 0.05).is_err());
        assert!(CylMesh::uniform(3, 5, 0.01, f64::NAN).is_err());
        assert!(CylMesh::with_zones(2, 2, 0.01, 0.05, vec![Zone::Active; 3]).is_err());
    }
}
