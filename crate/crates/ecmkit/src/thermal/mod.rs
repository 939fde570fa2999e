//! Axisymmetric electro-thermal model of a cylindrical cell.
//!
//! The cell body is meshed as an (r, z) grid of finite-volume rings
//! ([`mesh::CylMesh`]). Each co-simulation window solves three banded linear
//! systems on that grid:
//!
//! 1. the positive-collector potential, driven by the volumetric transfer
//!    current and grounded through the positive tab face,
//! 2. the negative-collector potential, same current with opposite sign,
//!    grounded through the negative tab face, and
//! 3. one implicit conduction step with convective (Robin) exterior faces.
//!
//! Heat sources follow the classic energy balance: the overpotential power
//! `I·(V_ocv − V)` integrated exactly over the window (the circuit model's
//! voltage trace is piecewise linear), an entropic term `−j·T·dU/dT`, and
//! collector Joule heating `σ|∇φ|²`. Because the conduction step is a
//! conservative finite-volume scheme, stored energy equals injected minus
//! boundary-lost energy to round-off at every window — [`CosimResult`]
//! tracks both sides of that ledger.
//!
//! [`cosimulate`] couples the lumped circuit model one way (electrical →
//! thermal): at the cell's operating currents self-heating stays in the
//! single-digit kelvin range, where parameter drift is secondary. The
//! uniform-temperature check model [`lumped_temperature`] shares the same
//! window integrals, so grid solutions can be validated against it.

mod band;
mod heat;
pub mod mesh;
mod potential;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cell::CellSpec;
use crate::ecm::{simulate, EcmState, SimulationResult};
use crate::error::{Error, Result};
use crate::ocv::OcvPolynomial;
use crate::params::SocParameterTable;
use crate::trace::CurrentVoltageTrace;

pub use heat::{boundary_heat_flow_w, step_temperature};
pub use mesh::{CylMesh, Zone};
pub use potential::{joule_heating, solve_potentials, TabPotentials};

/// Bulk material and collector properties of the jelly roll.
///
/// Defaults describe a spiral-wound AA-size lithium cell: layered windings
/// conduct heat an order of magnitude better along the axis than across it,
/// and the collector conductivities are those of aluminium and copper foil.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThermalProps {
    /// Bulk density, kg/m³.
    pub density_kg_m3: f64,
    /// Specific heat capacity, J/(kg·K).
    pub specific_heat_j_kg_k: f64,
    /// Through-winding (radial) conductivity, W/(m·K).
    pub k_radial_w_m_k: f64,
    /// Along-winding (axial) conductivity, W/(m·K).
    pub k_axial_w_m_k: f64,
    /// Positive collector electrical conductivity, S/m.
    pub sigma_plus_s_m: f64,
    /// Negative collector electrical conductivity, S/m.
    pub sigma_minus_s_m: f64,
    /// Entropic coefficient dU/dT, V/K (0 disables reversible heat).
    pub entropic_coeff_v_k: f64,
}

impl Default for ThermalProps {
    fn default() -> Self {
        ThermalProps {
            density_kg_m3: 1800.0,
            specific_heat_j_kg_k: 1100.0,
            k_radial_w_m_k: 3.0,
            k_axial_w_m_k: 30.0,
            sigma_plus_s_m: 3.8e7,
            sigma_minus_s_m: 6.0e7,
            entropic_coeff_v_k: 0.0,
        }
    }
}

impl ThermalProps {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("density", self.density_kg_m3),
            ("specific heat", self.specific_heat_j_kg_k),
            ("radial conductivity", self.k_radial_w_m_k),
            ("axial conductivity", self.k_axial_w_m_k),
            ("positive collector conductivity", self.sigma_plus_s_m),
            ("negative collector conductivity", self.sigma_minus_s_m),
        ];
        for (name, value) in positives {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !self.entropic_coeff_v_k.is_finite() {
            return Err(Error::Config("entropic coefficient must be finite".into()));
        }
        Ok(())
    }
}

/// What one group of exterior faces does thermally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceCondition {
    /// Robin face: film coefficient in series with half-cell conduction.
    Convective,
    /// Zero heat flux.
    Insulated,
}

/// Exterior thermal boundary: one ambient, one film coefficient, and a
/// per-face-group condition (curved side, top end, bottom end).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThermalBoundary {
    /// Convection film coefficient, W/(m²·K).
    pub h_conv_w_m2k: f64,
    /// Ambient (and initial) temperature, K.
    pub t_ambient_k: f64,
    pub side: FaceCondition,
    pub top: FaceCondition,
    pub bottom: FaceCondition,
}

impl Default for ThermalBoundary {
    /// Still air around a cell at 22 °C.
    fn default() -> Self {
        ThermalBoundary {
            h_conv_w_m2k: 10.0,
            t_ambient_k: 295.15,
            side: FaceCondition::Convective,
            top: FaceCondition::Convective,
            bottom: FaceCondition::Convective,
        }
    }
}

impl ThermalBoundary {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_conv_w_m2k.is_finite() && self.h_conv_w_m2k >= 0.0) {
            return Err(Error::Config(format!(
                "film coefficient must be non-negative, got {}",
                self.h_conv_w_m2k
            )));
        }
        if !self.t_ambient_k.is_finite() {
            return Err(Error::Config("ambient temperature must be finite".into()));
        }
        Ok(())
    }
}

/// Snapshot of the grid solution at one instant: temperature plus both
/// collector potentials, all in mesh cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalField {
    pub temperature_k: Vec<f64>,
    pub phi_plus_v: Vec<f64>,
    pub phi_minus_v: Vec<f64>,
    /// Simulation time of the snapshot, seconds.
    pub t_s: f64,
}

impl ThermalField {
    /// Isothermal field with zeroed potentials.
    pub fn uniform(mesh: &CylMesh, temperature_k: f64, t_s: f64) -> Self {
        let n = mesh.n_cells();
        ThermalField {
            temperature_k: vec![temperature_k; n],
            phi_plus_v: vec![0.0; n],
            phi_minus_v: vec![0.0; n],
            t_s,
        }
    }

    pub fn min_k(&self) -> f64 {
        self.temperature_k.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_k(&self) -> f64 {
        self.temperature_k.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Volume-weighted mean temperature.
    pub fn volume_avg_k(&self, mesh: &CylMesh) -> f64 {
        let mut sum = 0.0;
        for (c, t) in self.temperature_k.iter().enumerate() {
            sum += t * mesh.cell_volume_m3(mesh.coords(c).0);
        }
        sum / mesh.total_volume_m3()
    }

    /// Writes `r_m,z_m,temperature_K,phi_plus_V,phi_minus_V` rows in mesh
    /// cell order (radius varying fastest).
    pub fn write_csv<W: Write>(&self, mesh: &CylMesh, mut writer: W) -> Result<()> {
        writeln!(writer, "r_m,z_m,temperature_K,phi_plus_V,phi_minus_V")?;
        for c in 0..mesh.n_cells() {
            let (i, j) = mesh.coords(c);
            writeln!(
                writer,
                "{},{},{},{},{}",
                mesh.r_center_m(i),
                mesh.z_center_m(j),
                self.temperature_k[c],
                self.phi_plus_v.get(c).copied().unwrap_or(0.0),
                self.phi_minus_v.get(c).copied().unwrap_or(0.0),
            )?;
        }
        Ok(())
    }

    /// Writes the field as a legacy-format VTK rectilinear grid (the (r, z)
    /// plane as an X–Y grid, one cell thick) with temperature and both
    /// potentials as cell data. Readable by ParaView and VisIt.
    pub fn write_vtk<W: Write>(&self, mesh: &CylMesh, mut writer: W) -> Result<()> {
        let (n_r, n_z) = (mesh.n_r(), mesh.n_z());
        writeln!(writer, "# vtk DataFile Version 3.0")?;
        writeln!(writer, "cell cross-section at t = {} s", self.t_s)?;
        writeln!(writer, "ASCII")?;
        writeln!(writer, "DATASET RECTILINEAR_GRID")?;
        writeln!(writer, "DIMENSIONS {} {} 1", n_r + 1, n_z + 1)?;
        writeln!(writer, "X_COORDINATES {} double", n_r + 1)?;
        let xs: Vec<String> = (0..=n_r).map(|i| format!("{}", i as f64 * mesh.dr())).collect();
        writeln!(writer, "{}", xs.join(" "))?;
        writeln!(writer, "Y_COORDINATES {} double", n_z + 1)?;
        let ys: Vec<String> = (0..=n_z).map(|j| format!("{}", j as f64 * mesh.dz())).collect();
        writeln!(writer, "{}", ys.join(" "))?;
        writeln!(writer, "Z_COORDINATES 1 double")?;
        writeln!(writer, "0")?;
        writeln!(writer, "CELL_DATA {}", mesh.n_cells())?;
        for (name, values) in [
            ("temperature_K", &self.temperature_k),
            ("phi_plus_V", &self.phi_plus_v),
            ("phi_minus_V", &self.phi_minus_v),
        ] {
            if values.len() != mesh.n_cells() {
                continue;
            }
            writeln!(writer, "SCALARS {name} double 1")?;
            writeln!(writer, "LOOKUP_TABLE default")?;
            for v in values {
                writeln!(writer, "{v}")?;
            }
        }
        Ok(())
    }
}

/// Volumetric transfer current, A/m³: terminal current scaled by the ratio of
/// present to reference capacity and spread over the reacting volume. For a
/// fresh cell (`q_c == q_ref_c`) this is simply `current / volume`.
pub fn volumetric_current(current_a: f64, q_c: f64, q_ref_c: f64, volume_m3: f64) -> f64 {
    assert!(volume_m3 > 0.0, "reacting volume must be positive");
    assert!(q_ref_c > 0.0, "reference capacity must be positive");
    current_a * q_c / (q_ref_c * volume_m3)
}

/// Local electrochemical heat rate, W/m³: overpotential heat plus the
/// entropic (reversible) term,
/// `j·(V_ocv − V − T·dU/dT)`. Positive `j` is discharge.
pub fn electrochem_heat(
    j_a_m3: f64,
    v_ocv: f64,
    v_terminal: f64,
    temperature_k: f64,
    du_dt_v_k: f64,
) -> f64 {
    j_a_m3 * (v_ocv - v_terminal - temperature_k * du_dt_v_k)
}

/// Cumulative trapezoid integral of a sampled signal, queryable between
/// arbitrary times (clamped to the sampled span). Exact for piecewise-linear
/// signals, which is what the circuit integrator produces.
struct SampledIntegral<'a> {
    times: &'a [f64],
    values: &'a [f64],
    cumulative: Vec<f64>,
}

impl<'a> SampledIntegral<'a> {
    fn new(times: &'a [f64], values: &'a [f64]) -> Self {
        debug_assert_eq!(times.len(), values.len());
        let mut cumulative = vec![0.0; times.len()];
        for k in 1..times.len() {
            cumulative[k] = cumulative[k - 1]
                + 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
        }
        SampledIntegral { times, values, cumulative }
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        self.cumulative_at(b) - self.cumulative_at(a)
    }

    fn cumulative_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if n == 0 || t <= self.times[0] {
            return 0.0;
        }
        if t >= self.times[n - 1] {
            return self.cumulative[n - 1];
        }
        let k = self.times.partition_point(|&x| x <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        let v_t = self.values[k] + w * (self.values[k + 1] - self.values[k]);
        self.cumulative[k] + 0.5 * (self.values[k] + v_t) * (t - t0)
    }
}

/// Output of [`cosimulate`]: the electrical solution, per-window temperature
/// statistics, every field snapshot, and the energy ledger.
#[derive(Debug, Clone)]
pub struct CosimResult {
    pub electrical: SimulationResult,
    /// Snapshot times, starting at 0.
    pub times_s: Vec<f64>,
    /// Volume-averaged temperature at each snapshot, K.
    pub t_avg_k: Vec<f64>,
    /// Hottest cell at each snapshot, K.
    pub t_max_k: Vec<f64>,
    /// Coldest cell at each snapshot, K.
    pub t_min_k: Vec<f64>,
    /// Field snapshots aligned with `times_s` (index 0 is the initial field).
    pub fields: Vec<ThermalField>,
    /// Total heat injected by all sources, J.
    pub energy_source_j: f64,
    /// Total heat lost through the boundary, J.
    pub energy_loss_j: f64,
}

impl CosimResult {
    /// Peak volume-averaged temperature rise above the start, K.
    pub fn rise_k(&self) -> f64 {
        let t0 = self.t_avg_k[0];
        self.t_avg_k.iter().copied().fold(f64::NEG_INFINITY, f64::max) - t0
    }

    pub fn final_field(&self) -> &ThermalField {
        self.fields.last().expect("a co-simulation always records the initial field")
    }

    /// Heat stored in the grid between the first and last snapshot, J.
    pub fn energy_stored_j(&self, mesh: &CylMesh, props: &ThermalProps) -> f64 {
        let first = &self.fields[0].temperature_k;
        let last = &self.final_field().temperature_k;
        let rho_cp = props.density_kg_m3 * props.specific_heat_j_kg_k;
        let mut sum = 0.0;
        for c in 0..mesh.n_cells() {
            sum += rho_cp * mesh.cell_volume_m3(mesh.coords(c).0) * (last[c] - first[c]);
        }
        sum
    }

    /// Writes `time_s,T_avg_K,T_max_K,T_min_K` rows, one per snapshot.
    pub fn write_trace_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "time_s,T_avg_K,T_max_K,T_min_K")?;
        for k in 0..self.times_s.len() {
            writeln!(
                writer,
                "{},{},{},{}",
                self.times_s[k], self.t_avg_k[k], self.t_max_k[k], self.t_min_k[k]
            )?;
        }
        Ok(())
    }
}

/// Trailing window slivers shorter than this are dropped rather than stepped.
const MIN_WINDOW_S: f64 = 1e-9;

/// Runs the circuit model over `profile` from a full, rested charge, then
/// replays its heat release through the grid model in windows of
/// `dt_thermal_s`. The cell starts in equilibrium with the ambient.
///
/// Each window uses the exact time integrals of overpotential power and
/// current over the window, so no electrical energy is lost to sampling.
/// Overpotential heat spreads uniformly over the active zone; the entropic
/// term uses each cell's own temperature; Joule heat follows the collector
/// potential solution everywhere.
#[allow(clippy::too_many_arguments)]
pub fn cosimulate(
    profile: &CurrentVoltageTrace,
    spec: &CellSpec,
    table: &SocParameterTable,
    poly: &OcvPolynomial,
    mesh: &CylMesh,
    props: &ThermalProps,
    boundary: &ThermalBoundary,
    dt_thermal_s: f64,
) -> Result<CosimResult> {
    props.validate()?;
    boundary.validate()?;
    if !(dt_thermal_s.is_finite() && dt_thermal_s > 0.0) {
        return Err(Error::Argument(format!(
            "thermal window must be positive, got {dt_thermal_s}"
        )));
    }
    check_geometry(mesh, spec)?;
    let vol_active = mesh.active_volume_m3();
    if vol_active <= 0.0 {
        return Err(Error::Argument("mesh has no active cells to receive heat".into()));
    }

    let electrical = simulate(profile, spec, table, poly, &EcmState::at_rest(1.0), ecm_step(profile))?;
    let times: Vec<f64> = electrical.trace.times_s().to_vec();
    let currents: Vec<f64> = electrical.trace.currents_a().to_vec();
    let voltages = electrical
        .trace
        .voltages_v()
        .expect("the circuit integrator always records voltages");
    let power: Vec<f64> = (0..times.len())
        .map(|k| currents[k] * (poly.eval(electrical.soc[k]) - voltages[k]))
        .collect();
    let power_integral = SampledIntegral::new(&times, &power);
    let current_integral = SampledIntegral::new(&times, &currents);
    let t_end = *times.last().expect("a simulation trace is never empty");

    let n = mesh.n_cells();
    let mut field = ThermalField::uniform(mesh, boundary.t_ambient_k, 0.0);
    let mut times_s = vec![0.0];
    let mut t_avg_k = vec![field.volume_avg_k(mesh)];
    let mut t_max_k = vec![field.max_k()];
    let mut t_min_k = vec![field.min_k()];
    let mut fields = vec![field.clone()];
    let mut energy_source_j = 0.0;
    let mut energy_loss_j = 0.0;

    let mut t0 = 0.0;
    while t_end - t0 > MIN_WINDOW_S {
        let t1 = (t0 + dt_thermal_s).min(t_end);
        let dt_w = t1 - t0;
        let p_avg = power_integral.integral(t0, t1) / dt_w;
        let i_avg = current_integral.integral(t0, t1) / dt_w;
        let j_w = volumetric_current(i_avg, spec.nominal_capacity_c, spec.nominal_capacity_c, vol_active);

        let j_field: Vec<f64> = (0..n)
            .map(|c| if mesh.zone(c) == Zone::Active { j_w } else { 0.0 })
            .collect();
        let (phi_plus, phi_minus) =
            solve_potentials(mesh, props, &j_field, &TabPotentials::default())?;
        let joule = joule_heating(mesh, props, &phi_plus, &phi_minus);

        let sources: Vec<f64> = (0..n)
            .map(|c| {
                let mut q = joule[c];
                if mesh.zone(c) == Zone::Active {
                    q += p_avg / vol_active
                        - j_w * field.temperature_k[c] * props.entropic_coeff_v_k;
                }
                q
            })
            .collect();

        let mut next = step_temperature(&field, mesh, props, boundary, &sources, dt_w)?;
        next.phi_plus_v = phi_plus;
        next.phi_minus_v = phi_minus;

        for c in 0..n {
            energy_source_j += sources[c] * mesh.cell_volume_m3(mesh.coords(c).0) * dt_w;
        }
        energy_loss_j += boundary_heat_flow_w(&next, mesh, props, boundary) * dt_w;
        times_s.push(next.t_s);
        t_avg_k.push(next.volume_avg_k(mesh));
        t_max_k.push(next.max_k());
        t_min_k.push(next.min_k());
        fields.push(next.clone());
        field = next;
        t0 = t1;
    }
    Ok(CosimResult {
        electrical,
        times_s,
        t_avg_k,
        t_max_k,
        t_min_k,
        fields,
        energy_source_j,
        energy_loss_j,
    })
}

/// Uniform-temperature check model: same excitation and heat input as
/// [`cosimulate`] but a single thermal mass `m·Cp` cooled through a fixed
/// conductance `h_a_w_k` (W/K). Returns the electrical solution and the
/// temperature at every trace sample (implicit Euler per sample interval;
/// overpotential heat only). Starts at the ambient temperature.
pub fn lumped_temperature(
    profile: &CurrentVoltageTrace,
    spec: &CellSpec,
    table: &SocParameterTable,
    poly: &OcvPolynomial,
    mass_kg: f64,
    specific_heat_j_kg_k: f64,
    h_a_w_k: f64,
    t_ambient_k: f64,
) -> Result<(SimulationResult, Vec<f64>)> {
    if !(mass_kg > 0.0 && mass_kg.is_finite()) {
        return Err(Error::Argument(format!("mass must be positive, got {mass_kg}")));
    }
    if !(specific_heat_j_kg_k > 0.0 && specific_heat_j_kg_k.is_finite()) {
        return Err(Error::Argument(format!(
            "specific heat must be positive, got {specific_heat_j_kg_k}"
        )));
    }
    if !(h_a_w_k >= 0.0 && h_a_w_k.is_finite()) {
        return Err(Error::Argument(format!(
            "loss conductance must be non-negative, got {h_a_w_k}"
        )));
    }
    if !t_ambient_k.is_finite() {
        return Err(Error::Argument("ambient temperature must be finite".into()));
    }

    let electrical = simulate(profile, spec, table, poly, &EcmState::at_rest(1.0), ecm_step(profile))?;
    let times = electrical.trace.times_s();
    let currents = electrical.trace.currents_a();
    let voltages = electrical
        .trace
        .voltages_v()
        .expect("the circuit integrator always records voltages");
    let m_cp = mass_kg * specific_heat_j_kg_k;

    let mut temps = Vec::with_capacity(times.len());
    temps.push(t_ambient_k);
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        let p0 = currents[k - 1] * (poly.eval(electrical.soc[k - 1]) - voltages[k - 1]);
        let p1 = currents[k] * (poly.eval(electrical.soc[k]) - voltages[k]);
        let p_avg = 0.5 * (p0 + p1);
        let prev = temps[k - 1];
        let next = (prev + dt / m_cp * (p_avg + h_a_w_k * t_ambient_k))
            / (1.0 + h_a_w_k * dt / m_cp);
        temps.push(next);
    }
    Ok((electrical, temps))
}

/// Internal circuit step: the finest profile interval, capped at 2.5 s.
fn ecm_step(profile: &CurrentVoltageTrace) -> f64 {
    profile
        .times_s()
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
        .min(2.5)
}

fn check_geometry(mesh: &CylMesh, spec: &CellSpec) -> Result<()> {
    let dr = (mesh.radius_m() - spec.radius_m()).abs();
    let dh = (mesh.height_m() - spec.height_m).abs();
    if dr > 1e-9 * spec.radius_m() || dh > 1e-9 * spec.height_m {
        return Err(Error::Argument(format!(
            "mesh is {}×{} m but the cell is {}×{} m",
            mesh.radius_m(),
            mesh.height_m(),
            spec.radius_m(),
            spec.height_m
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hppc::{generate_profile, HppcProfileSpec};
    use crate::presets;

    fn pulse_profile(duration_s: f64) -> CurrentVoltageTrace {
        generate_profile(&HppcProfileSpec { duration_s, ..Default::default() }).unwrap()
    }

    #[test]
    fn volumetric_current_is_current_over_volume_for_a_fresh_cell() {
        assert_eq!(volumetric_current(0.0, 5.0, 5.0, 2.0), 0.0);
        assert_eq!(volumetric_current(2.0, 5.0, 5.0, 4.0), 0.5);
        // Half the reference capacity halves the transfer current density.
        assert_eq!(volumetric_current(2.0, 2.5, 5.0, 4.0), 0.25);

        // Hand value: 1.5 A over a 14.5 mm × 50.5 mm cylinder.
        let spec = presets::lifes2_aa_cell();
        let j = volumetric_current(1.5, spec.nominal_capacity_c, spec.nominal_capacity_c, spec.volume_m3());
        assert!((j - 179876.32).abs() < 0.5, "{j}");
        assert!((j - 1.799e5).abs() < 100.0, "{j}");
    }

    #[test]
    fn electrochemical_heat_has_the_right_signs() {
        // Pure overpotential heat.
        let q = electrochem_heat(1.8e5, 1.75, 1.5, 295.0, 0.0);
        assert!((q - 1.8e5 * 0.25).abs() < 1e-9 * q);
        // No overpotential, no entropic coefficient: exactly zero.
        assert_eq!(electrochem_heat(1.8e5, 1.8, 1.8, 295.0, 0.0), 0.0);
        // A negative dU/dT releases heat on discharge even at zero
        // overpotential.
        assert!(electrochem_heat(1.8e5, 1.8, 1.8, 295.0, -2e-4) > 0.0);
        // ... and absorbs it on charge.
        assert!(electrochem_heat(-1.8e5, 1.8, 1.8, 295.0, -2e-4) < 0.0);
    }

    #[test]
    fn zero_current_cosimulation_stays_at_ambient() {
        let spec = presets::lifes2_aa_cell();
        let profile = CurrentVoltageTrace::new(
            (0..61).map(|k| k as f64 * 10.0).collect(),
            vec![0.0; 61],
            None,
        )
        .unwrap();
        let mesh = CylMesh::for_cell(&spec, 6, 12).unwrap();
        let result = cosimulate(
            &profile,
            &spec,
            &presets::lifes2_aa_params(),
            &presets::lifes2_aa_ocv(),
            &mesh,
            &ThermalProps::default(),
            &ThermalBoundary::default(),
            30.0,
        )
        .unwrap();
        for t in &result.t_avg_k {
            assert!((t - 295.15).abs() < 1e-9, "{t}");
        }
        assert!(result.rise_k().abs() < 1e-9);
    }

    #[test]
    fn cosimulation_energy_ledger_balances() {
        let spec = presets::lifes2_aa_cell();
        let mesh = CylMesh::for_cell(&spec, 8, 16).unwrap();
        let result = cosimulate(
            &pulse_profile(1800.0),
            &spec,
            &presets::lifes2_aa_params(),
            &presets::lifes2_aa_ocv(),
            &mesh,
            &ThermalProps::default(),
            &ThermalBoundary::default(),
            10.0,
        )
        .unwrap();
        let stored = result.energy_stored_j(&mesh, &ThermalProps::default());
        let balance = stored - (result.energy_source_j - result.energy_loss_j);
        assert!(
            balance.abs() < 1e-8 * result.energy_source_j.abs(),
            "imbalance {balance} of {} J injected",
            result.energy_source_j
        );
        // The source ledger assigns exactly the electrical heat (plus
        // collector losses) to the grid.
        assert!(result.energy_source_j > 0.0);
    }

    #[test]
    fn cosimulation_rise_is_mesh_converged() {
        let spec = presets::lifes2_aa_cell();
        let table = presets::lifes2_aa_params();
        let poly = presets::lifes2_aa_ocv();
        let profile = pulse_profile(1800.0);
        let props = ThermalProps::default();
        let boundary = ThermalBoundary::default();
        let coarse = cosimulate(
            &profile,
            &spec,
            &table,
            &poly,
            &CylMesh::for_cell(&spec, 10, 30).unwrap(),
            &props,
            &boundary,
            10.0,
        )
        .unwrap();
        let fine = cosimulate(
            &profile,
            &spec,
            &table,
            &poly,
            &CylMesh::for_cell(&spec, 20, 60).unwrap(),
            &props,
            &boundary,
            10.0,
        )
        .unwrap();
        let (a, b) = (coarse.rise_k(), fine.rise_k());
        assert!(a > 0.1 && b > 0.1, "expected measurable heating, got {a} and {b}");
        assert!((a - b).abs() < 0.01 * b, "coarse {a} K vs fine {b} K");
    }

    #[test]
    fn cosimulation_tracks_the_lumped_model_at_low_biot() {
        let spec = presets::lifes2_aa_cell();
        let table = presets::lifes2_aa_params();
        let poly = presets::lifes2_aa_ocv();
        let profile = pulse_profile(3600.0);
        let props = ThermalProps::default();
        let boundary = ThermalBoundary::default();
        let mesh = CylMesh::for_cell(&spec, 8, 24).unwrap();
        let grid = cosimulate(&profile, &spec, &table, &poly, &mesh, &props, &boundary, 10.0)
            .unwrap();
        let (_, lumped) = lumped_temperature(
            &profile,
            &spec,
            &table,
            &poly,
            props.density_kg_m3 * mesh.total_volume_m3(),
            props.specific_heat_j_kg_k,
            boundary.h_conv_w_m2k * mesh.surface_area_m2(),
            boundary.t_ambient_k,
        )
        .unwrap();
        let grid_rise = grid.t_avg_k.last().unwrap() - boundary.t_ambient_k;
        let lumped_rise = lumped.last().unwrap() - boundary.t_ambient_k;
        assert!(grid_rise > 0.5, "expected measurable heating, got {grid_rise} K");
        assert!(
            (grid_rise - lumped_rise).abs() < 0.05 * lumped_rise,
            "grid {grid_rise} K vs lumped {lumped_rise} K"
        );
    }

    #[test]
    fn lumped_adiabatic_heating_integrates_the_power_trace() {
        let spec = presets::lifes2_aa_cell();
        let table = presets::lifes2_aa_params();
        let poly = presets::lifes2_aa_ocv();
        let profile = pulse_profile(1200.0);
        let (m, cp) = (0.02, 900.0);
        let (electrical, temps) =
            lumped_temperature(&profile, &spec, &table, &poly, m, cp, 0.0, 295.15).unwrap();
        // With no losses the final temperature is the exact trapezoid
        // integral of the overpotential power.
        let times = electrical.trace.times_s();
        let currents = electrical.trace.currents_a();
        let voltages = electrical.trace.voltages_v().unwrap();
        let mut heat_j = 0.0;
        for k in 1..times.len() {
            let p0 = currents[k - 1] * (poly.eval(electrical.soc[k - 1]) - voltages[k - 1]);
            let p1 = currents[k] * (poly.eval(electrical.soc[k]) - voltages[k]);
            heat_j += 0.5 * (p0 + p1) * (times[k] - times[k - 1]);
        }
        let want = 295.15 + heat_j / (m * cp);
        let got = *temps.last().unwrap();
        assert!((got - want).abs() < 1e-12 * want, "{got} vs {want}");
        assert!(heat_j > 0.0);
    }

    #[test]
    fn lumped_constant_load_settles_at_power_over_conductance() {
        // A steady load on a huge-capacity cell: after many time constants
        // the rise equals dissipated power over the loss conductance.
        let spec = CellSpec::builder()
            .capacity_mah(1e9)
            .nominal_voltage_v(1.5)
            .cutoff_voltage_v(0.8)
            .diameter_m(0.0145)
            .height_m(0.0505)
            .build()
            .unwrap();
        let table = SocParameterTable::constant(crate::params::RcParams::new(
            0.05, 0.03, 0.02, 100.0, 1000.0,
        ))
        .unwrap();
        let poly = presets::lifes2_aa_ocv();
        let n = 2001;
        let profile = CurrentVoltageTrace::new(
            (0..n).map(|k| k as f64 * 2.0).collect(),
            vec![2.0; n],
            None,
        )
        .unwrap();
        let (m, cp, ha) = (0.019, 1000.0, 0.08);
        let (electrical, temps) =
            lumped_temperature(&profile, &spec, &table, &poly, m, cp, ha, 295.15).unwrap();
        // τ = m·Cp/hA = 237.5 s, so 4000 s is nearly 17 time constants.
        let currents = electrical.trace.currents_a();
        let voltages = electrical.trace.voltages_v().unwrap();
        let last = electrical.trace.len() - 1;
        let p_final =
            currents[last] * (poly.eval(electrical.soc[last]) - voltages[last]);
        let want = 295.15 + p_final / ha;
        let got = *temps.last().unwrap();
        assert!((got - want).abs() < 0.01 * (want - 295.15), "{got} vs {want}");
    }

    #[test]
    fn mismatched_mesh_and_cell_geometry_is_rejected() {
        let spec = presets::lifes2_aa_cell();
        let mesh = CylMesh::uniform(4, 8, 0.009, 0.065).unwrap();
        let err = cosimulate(
            &pulse_profile(300.0),
            &spec,
            &presets::lifes2_aa_params(),
            &presets::lifes2_aa_ocv(),
            &mesh,
            &ThermalProps::default(),
            &ThermalBoundary::default(),
            10.0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn field_exports_have_the_advertised_shape() {
        let mesh = CylMesh::uniform(3, 4, 0.007, 0.05).unwrap();
        let field = ThermalField::uniform(&mesh, 300.0, 12.5);

        let mut csv = Vec::new();
        field.write_csv(&mesh, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "r_m,z_m,temperature_K,phi_plus_V,phi_minus_V");
        assert_eq!(lines.len(), 1 + mesh.n_cells());

        let mut vtk = Vec::new();
        field.write_vtk(&mesh, &mut vtk).unwrap();
        let text = String::from_utf8(vtk).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0"));
        assert!(text.contains("DATASET RECTILINEAR_GRID"));
        assert!(text.contains("DIMENSIONS 4 5 1"));
        assert!(text.contains("CELL_DATA 12"));
        assert!(text.contains("SCALARS temperature_K double 1"));
    }
}
