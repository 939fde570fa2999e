//! Implicit finite-volume heat conduction step.
//!
//! One backward-Euler step solves
//!
//! ```text
//! (ρ·Cp·V/dt + Σ g + Σ U·A)·T_c − Σ g·T_nb = (ρ·Cp·V/dt)·T_old + q_c·V + Σ U·A·T_amb
//! ```
//!
//! with interior face conductances g = k·A/d and Robin exterior faces whose
//! transfer coefficient chains the half-cell conduction path in series with
//! the film: U = 1/(1/h + d_half/k). Interior fluxes telescope, so the
//! discrete energy balance (stored change = source − boundary loss) holds to
//! round-off at every step, and the implicit M-matrix keeps source-free
//! extrema bounded by the initial field and the ambient.

use super::band::{solve_checked, BandedMatrix};
use super::mesh::CylMesh;
use super::{FaceCondition, ThermalBoundary, ThermalField, ThermalProps};
use crate::error::{Error, Result};

/// Advances the temperature field by one implicit step of `dt_s` seconds
/// under the given volumetric heat sources (W/m³ per cell). Potential fields
/// carry over unchanged.
pub fn step_temperature(
    field: &ThermalField,
    mesh: &CylMesh,
    props: &ThermalProps,
    boundary: &ThermalBoundary,
    sources: &[f64],
    dt_s: f64,
) -> Result<ThermalField> {
    props.validate()?;
    boundary.validate()?;
    let n = mesh.n_cells();
    if field.temperature_k.len() != n {
        return Err(Error::Argument(format!(
            "field has {} cells but the mesh has {n}",
            field.temperature_k.len()
        )));
    }
    if sources.len() != n {
        return Err(Error::Argument(format!(
            "source field covers {} cells but the mesh has {n}",
            sources.len()
        )));
    }
    if !(dt_s.is_finite() && dt_s > 0.0) {
        return Err(Error::Argument(format!("time step must be positive, got {dt_s}")));
    }
    if sources.iter().any(|q| !q.is_finite()) {
        return Err(Error::Numeric("non-finite heat source".into()));
    }

    let (n_r, n_z) = (mesh.n_r(), mesh.n_z());
    let (dr, dz) = (mesh.dr(), mesh.dz());
    let rho_cp = props.density_kg_m3 * props.specific_heat_j_kg_k;
    let mut a = BandedMatrix::new(n, n_r, n_r);
    let mut b = vec![0.0; n];

    for j in 0..n_z {
        for i in 0..n_r {
            let c = mesh.index(i, j);
            let vol = mesh.cell_volume_m3(i);
            let cap = rho_cp * vol / dt_s;
            a.add(c, c, cap);
            b[c] += cap * field.temperature_k[c] + sources[c] * vol;

            if i + 1 < n_r {
                let g = props.k_radial_w_m_k * mesh.radial_face_area_m2(i + 1) / dr;
                let e = mesh.index(i + 1, j);
                a.add(c, c, g);
                a.add(c, e, -g);
                a.add(e, e, g);
                a.add(e, c, -g);
            }
            if j + 1 < n_z {
                let g = props.k_axial_w_m_k * mesh.axial_face_area_m2(i) / dz;
                let nb = mesh.index(i, j + 1);
                a.add(c, c, g);
                a.add(c, nb, -g);
                a.add(nb, nb, g);
                a.add(nb, c, -g);
            }

            for (cond, area, half, k) in exterior_faces(mesh, props, boundary, i, j) {
                if let Some(ua) = face_transfer_w_k(cond, boundary.h_conv_w_m2k, area, half, k) {
                    a.add(c, c, ua);
                    b[c] += ua * boundary.t_ambient_k;
                }
            }
        }
    }

    let temperature_k = solve_checked(&a, &b)?;
    Ok(ThermalField {
        temperature_k,
        phi_plus_v: field.phi_plus_v.clone(),
        phi_minus_v: field.phi_minus_v.clone(),
        t_s: field.t_s + dt_s,
    })
}

/// Net heat flow out through the boundary for the current field, in watts
/// (positive = cell losing heat to ambient).
pub fn boundary_heat_flow_w(
    field: &ThermalField,
    mesh: &CylMesh,
    props: &ThermalProps,
    boundary: &ThermalBoundary,
) -> f64 {
    let mut total = 0.0;
    for j in 0..mesh.n_z() {
        for i in 0..mesh.n_r() {
            let c = mesh.index(i, j);
            for (cond, area, half, k) in exterior_faces(mesh, props, boundary, i, j) {
                if let Some(ua) = face_transfer_w_k(cond, boundary.h_conv_w_m2k, area, half, k) {
                    total += ua * (field.temperature_k[c] - boundary.t_ambient_k);
                }
            }
        }
    }
    total
}

/// Exterior faces of cell (i, j): (condition, face area, half-cell distance,
/// conductivity along the face normal). At most three — side, bottom, top.
fn exterior_faces(
    mesh: &CylMesh,
    props: &ThermalProps,
    boundary: &ThermalBoundary,
    i: usize,
    j: usize,
) -> Vec<(FaceCondition, f64, f64, f64)> {
    let mut faces = Vec::with_capacity(3);
    if i + 1 == mesh.n_r() {
        faces.push((
            boundary.side,
            mesh.radial_face_area_m2(mesh.n_r()),
            mesh.dr() / 2.0,
            props.k_radial_w_m_k,
        ));
    }
    if j == 0 {
        faces.push((boundary.bottom, mesh.axial_face_area_m2(i), mesh.dz() / 2.0, props.k_axial_w_m_k));
    }
    if j + 1 == mesh.n_z() {
        faces.push((boundary.top, mesh.axial_face_area_m2(i), mesh.dz() / 2.0, props.k_axial_w_m_k));
    }
    faces
}

fn face_transfer_w_k(cond: FaceCondition, h: f64, area: f64, half: f64, k: f64) -> Option<f64> {
    match cond {
        FaceCondition::Insulated => None,
        FaceCondition::Convective => {
            if h <= 0.0 {
                None
            } else {
                Some(area / (1.0 / h + half / k))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_props() -> ThermalProps {
        // Light thermal mass keeps test time constants short.
        ThermalProps {
            density_kg_m3: 1000.0,
            specific_heat_j_kg_k: 100.0,
            k_radial_w_m_k: 1000.0,
            k_axial_w_m_k: 1000.0,
            ..Default::default()
        }
    }

    fn insulated(t_ambient_k: f64) -> ThermalBoundary {
        ThermalBoundary {
            t_ambient_k,
            side: FaceCondition::Insulated,
            top: FaceCondition::Insulated,
            bottom: FaceCondition::Insulated,
            ..Default::default()
        }
    }

    #[test]
    fn ambient_equilibrium_is_a_fixed_point() {
        let mesh = CylMesh::uniform(3, 6, 0.007, 0.05).unwrap();
        let boundary = ThermalBoundary::default();
        let field = ThermalField::uniform(&mesh, boundary.t_ambient_k, 0.0);
        let src = vec![0.0; mesh.n_cells()];
        let next =
            step_temperature(&field, &mesh, &ThermalProps::default(), &boundary, &src, 5.0)
                .unwrap();
        for t in &next.temperature_k {
            assert!((t - boundary.t_ambient_k).abs() < 1e-12);
        }
        assert!((next.t_s - 5.0).abs() < 1e-12);
    }

    #[test]
    fn insulated_uniform_source_heats_every_cell_identically() {
        let mesh = CylMesh::uniform(4, 9, 0.01, 0.04).unwrap();
        let props = small_props();
        let field = ThermalField::uniform(&mesh, 300.0, 0.0);
        let q = 5.0e4;
        let src = vec![q; mesh.n_cells()];
        let dt = 2.0;
        let next = step_temperature(&field, &mesh, &props, &insulated(300.0), &src, dt).unwrap();
        let want = 300.0 + q * dt / (props.density_kg_m3 * props.specific_heat_j_kg_k);
        for t in &next.temperature_k {
            assert!((t - want).abs() < 1e-8 * want, "{t} vs {want}");
        }
    }

    #[test]
    fn convective_cooldown_follows_the_lumped_exponential() {
        // High conductivity keeps the field uniform, so the volume average
        // should track T_amb + ΔT₀·exp(−t/τ) with τ = ρ·Cp·V/(h·A).
        let mesh = CylMesh::uniform(4, 8, 0.01, 0.04).unwrap();
        let props = small_props();
        let boundary = ThermalBoundary { h_conv_w_m2k: 50.0, t_ambient_k: 300.0, ..Default::default() };
        let tau = props.density_kg_m3 * props.specific_heat_j_kg_k * mesh.total_volume_m3()
            / (boundary.h_conv_w_m2k * mesh.surface_area_m2());
        let src = vec![0.0; mesh.n_cells()];
        let dt = tau / 160.0;
        let mut field = ThermalField::uniform(&mesh, 310.0, 0.0);
        for _ in 0..160 {
            field = step_temperature(&field, &mesh, &props, &boundary, &src, dt).unwrap();
        }
        let want = 300.0 + 10.0 * (-1.0f64).exp();
        let got = field.volume_avg_k(&mesh);
        assert!(
            (got - want).abs() < 0.05 * 10.0,
            "after one time constant: {got} vs {want}"
        );
    }

    #[test]
    fn every_step_balances_stored_source_and_boundary_energy() {
        let mesh = CylMesh::uniform(5, 11, 0.009, 0.065).unwrap();
        let props = ThermalProps::default();
        let boundary = ThermalBoundary {
            h_conv_w_m2k: 25.0,
            t_ambient_k: 298.15,
            top: FaceCondition::Insulated,
            ..Default::default()
        };
        // Deterministic non-uniform sources and initial field.
        let src: Vec<f64> = (0..mesh.n_cells()).map(|c| 1e4 * (1.0 + (c % 7) as f64)).collect();
        let init: Vec<f64> =
            (0..mesh.n_cells()).map(|c| 298.15 + ((c % 5) as f64 - 2.0)).collect();
        let mut field =
            ThermalField { temperature_k: init, phi_plus_v: vec![], phi_minus_v: vec![], t_s: 0.0 };
        let rho_cp = props.density_kg_m3 * props.specific_heat_j_kg_k;
        let dt = 3.0;
        for _ in 0..4 {
            let next = step_temperature(&field, &mesh, &props, &boundary, &src, dt).unwrap();
            let mut stored = 0.0;
            let mut injected = 0.0;
            for c in 0..mesh.n_cells() {
                let vol = mesh.cell_volume_m3(mesh.coords(c).0);
                stored += rho_cp * vol * (next.temperature_k[c] - field.temperature_k[c]);
                injected += src[c] * vol * dt;
            }
            let lost = boundary_heat_flow_w(&next, &mesh, &props, &boundary) * dt;
            let balance = stored - (injected - lost);
            assert!(
                balance.abs() < 1e-8 * injected.abs().max(stored.abs()),
                "imbalance {balance} (stored {stored}, injected {injected}, lost {lost})"
            );
            field = next;
        }
    }

    #[test]
    fn source_free_extrema_stay_between_initial_field_and_ambient() {
        let mesh = CylMesh::uniform(6, 10, 0.007, 0.05).unwrap();
        let props = ThermalProps::default();
        let boundary = ThermalBoundary::default();
        // Hot spot in the core, cool band near the wall.
        let init: Vec<f64> = (0..mesh.n_cells())
            .map(|c| {
                let (i, _) = mesh.coords(c);
                if i < 2 {
                    320.0
                } else if i + 1 == mesh.n_r() {
                    290.0
                } else {
                    300.0
                }
            })
            .collect();
        let lo = 290.0f64.min(boundary.t_ambient_k);
        let hi = 320.0f64.max(boundary.t_ambient_k);
        let src = vec![0.0; mesh.n_cells()];
        let mut field =
            ThermalField { temperature_k: init, phi_plus_v: vec![], phi_minus_v: vec![], t_s: 0.0 };
        for _ in 0..20 {
            field = step_temperature(&field, &mesh, &props, &boundary, &src, 4.0).unwrap();
            assert!(field.min_k() >= lo - 1e-9, "min {}", field.min_k());
            assert!(field.max_k() <= hi + 1e-9, "max {}", field.max_k());
        }
    }
}
