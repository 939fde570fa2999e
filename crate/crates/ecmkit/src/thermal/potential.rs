//! Quasi-static electrode-potential fields.
//!
//! Both collector potentials satisfy a Poisson equation driven by the
//! volumetric current transfer: ∇·(σ₊∇φ₊) = −j and ∇·(σ₋∇φ₋) = +j. Each
//! field is grounded through its tab zone's exterior end face (a Dirichlet
//! face); every other boundary face is insulated.
//!
//! The Dirichlet face flux uses a three-point one-sided closure (face value
//! plus the two nearest cell centers), which keeps the whole scheme nodally
//! exact for quadratic solutions — uniform-source columns reproduce the
//! closed-form parabola at every cell center.

use super::band::{solve_checked, BandedMatrix};
use super::mesh::{CylMesh, Zone};
use super::ThermalProps;
use crate::error::{Error, Result};

/// Dirichlet values applied on the tab end faces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabPotentials {
    pub phi_plus_v: f64,
    pub phi_minus_v: f64,
}

impl Default for TabPotentials {
    fn default() -> Self {
        TabPotentials { phi_plus_v: 0.0, phi_minus_v: 0.0 }
    }
}

/// Solves both potential fields for a given volumetric-current field
/// (A/m³ per cell, positive where the positive electrode absorbs current).
pub fn solve_potentials(
    mesh: &CylMesh,
    props: &ThermalProps,
    j_ech: &[f64],
    tabs: &TabPotentials,
) -> Result<(Vec<f64>, Vec<f64>)> {
    props.validate()?;
    if j_ech.len() != mesh.n_cells() {
        return Err(Error::Argument(format!(
            "current field covers {} cells but the mesh has {}",
            j_ech.len(),
            mesh.n_cells()
        )));
    }
    if j_ech.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite volumetric current".into()));
    }
    let phi_plus = solve_one(mesh, props.sigma_plus_s_m, j_ech, 1.0, Zone::PositiveTab, tabs.phi_plus_v)?;
    let phi_minus =
        solve_one(mesh, props.sigma_minus_s_m, j_ech, -1.0, Zone::NegativeTab, tabs.phi_minus_v)?;
    Ok((phi_plus, phi_minus))
}

/// One Poisson solve: Σ_faces σA(φ_c − φ_nb)/d = rhs_sign·j_c·V_c, with the
/// Dirichlet closure on the tab zone's end faces.
fn solve_one(
    mesh: &CylMesh,
    sigma: f64,
    j_ech: &[f64],
    rhs_sign: f64,
    tab_zone: Zone,
    tab_value: f64,
) -> Result<Vec<f64>> {
    let (n_r, n_z) = (mesh.n_r(), mesh.n_z());
    let n = mesh.n_cells();
    let (dr, dz) = (mesh.dr(), mesh.dz());
    let mut a = BandedMatrix::new(n, n_r, n_r);
    let mut b = vec![0.0; n];
    let mut n_dirichlet = 0usize;

    for j in 0..n_z {
        for i in 0..n_r {
            let c = mesh.index(i, j);
            b[c] += rhs_sign * j_ech[c] * mesh.cell_volume_m3(i);

            // Interior radial faces (face 0 is the axis, zero area; the
            // outer face is insulated).
            if i + 1 < n_r {
                let g = sigma * mesh.radial_face_area_m2(i + 1) / dr;
                let e = mesh.index(i + 1, j);
                a.add(c, c, g);
                a.add(c, e, -g);
                a.add(e, e, g);
                a.add(e, c, -g);
            }
            // Interior axial face to the north.
            if j + 1 < n_z {
                let g = sigma * mesh.axial_face_area_m2(i) / dz;
                let nb = mesh.index(i, j + 1);
                a.add(c, c, g);
                a.add(c, nb, -g);
                a.add(nb, nb, g);
                a.add(nb, c, -g);
            }
            // Dirichlet end faces of this potential's tab zone. The flux
            // closure fits a parabola through the face value and the two
            // nearest cell centers.
            if mesh.zone(c) == tab_zone && (j == 0 || j == n_z - 1) {
                let g = sigma * mesh.axial_face_area_m2(i) / dz;
                let inward = if j == 0 { mesh.index(i, 1) } else { mesh.index(i, n_z - 2) };
                a.add(c, c, 3.0 * g);
                a.add(c, inward, -g / 3.0);
                b[c] += 8.0 * g / 3.0 * tab_value;
                n_dirichlet += 1;
            }
        }
    }

    if n_dirichlet == 0 {
        return Err(Error::Solver(format!(
            "potential field has no reference: no {tab_zone:?} cell touches an end face"
        )));
    }
    solve_checked(&a, &b)
}

/// Per-cell Joule heating σ₊|∇φ₊|² + σ₋|∇φ₋|², W/m³. Gradients are
/// cell-centered central differences (one-sided at boundaries); collector
/// dissipation is orders of magnitude below the electrochemical heat, so
/// this modest accuracy is plenty.
pub fn joule_heating(
    mesh: &CylMesh,
    props: &ThermalProps,
    phi_plus: &[f64],
    phi_minus: &[f64],
) -> Vec<f64> {
    let gp = gradient_sq(mesh, phi_plus);
    let gm = gradient_sq(mesh, phi_minus);
    gp.iter()
        .zip(gm)
        .map(|(p, m)| props.sigma_plus_s_m * p + props.sigma_minus_s_m * m)
        .collect()
}

fn gradient_sq(mesh: &CylMesh, phi: &[f64]) -> Vec<f64> {
    let (n_r, n_z) = (mesh.n_r(), mesh.n_z());
    let (dr, dz) = (mesh.dr(), mesh.dz());
    let mut out = vec![0.0; mesh.n_cells()];
    for j in 0..n_z {
        for i in 0..n_r {
            let c = mesh.index(i, j);
            let grad_r = match (i > 0, i + 1 < n_r) {
                (true, true) => (phi[mesh.index(i + 1, j)] - phi[mesh.index(i - 1, j)]) / (2.0 * dr),
                (false, true) => (phi[mesh.index(i + 1, j)] - phi[c]) / dr,
                (true, false) => (phi[c] - phi[mesh.index(i - 1, j)]) / dr,
                (false, false) => 0.0,
            };
            let grad_z = match (j > 0, j + 1 < n_z) {
                (true, true) => (phi[mesh.index(i, j + 1)] - phi[mesh.index(i, j - 1)]) / (2.0 * dz),
                (false, true) => (phi[mesh.index(i, j + 1)] - phi[c]) / dz,
                (true, false) => (phi[c] - phi[mesh.index(i, j - 1)]) / dz,
                (false, false) => 0.0,
            };
            out[c] = grad_r * grad_r + grad_z * grad_z;
        }
    }
    out
}
