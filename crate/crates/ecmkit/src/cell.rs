//! Static cell constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds per hour; used when converting mAh-denominated capacity to coulombs.
const MAH_TO_COULOMB: f64 = 3.6;

/// Static constants of one cylindrical cell.
///
/// Capacity is stored canonically in coulombs; mAh is accepted at the
/// construction boundary via [`CellSpec::builder`] / [`CellSpecBuilder::capacity_mah`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    /// Nominal capacity in coulombs.
    pub nominal_capacity_c: f64,
    /// Nominal terminal voltage, volts.
    pub nominal_voltage_v: f64,
    /// Discharge cut-off voltage, volts.
    pub cutoff_voltage_v: f64,
    /// Coulombic (charge) efficiency, dimensionless in (0, 1].
    pub coulombic_efficiency: f64,
    /// Cell diameter, metres.
    pub diameter_m: f64,
    /// Cell height, metres.
    pub height_m: f64,
}

impl CellSpec {
    /// Validates and builds a spec with capacity given in coulombs.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        nominal_capacity_c: f64,
        nominal_voltage_v: f64,
        cutoff_voltage_v: f64,
        coulombic_efficiency: f64,
        diameter_m: f64,
        height_m: f64,
    ) -> Result<Self> {
        let spec = CellSpec {
            nominal_capacity_c,
            nominal_voltage_v,
            cutoff_voltage_v,
            coulombic_efficiency,
            diameter_m,
            height_m,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn builder() -> CellSpecBuilder {
        CellSpecBuilder::default()
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.nominal_capacity_c,
            self.nominal_voltage_v,
            self.cutoff_voltage_v,
            self.coulombic_efficiency,
            self.diameter_m,
            self.height_m,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("cell spec contains non-finite values".into()));
        }
        if self.nominal_capacity_c <= 0.0 {
            return Err(Error::Config(format!(
                "nominal capacity must be positive, got {} C",
                self.nominal_capacity_c
            )));
        }
        if self.cutoff_voltage_v >= self.nominal_voltage_v {
            return Err(Error::Config(format!(
                "cutoff voltage ({} V) must be below nominal voltage ({} V)",
                self.cutoff_voltage_v, self.nominal_voltage_v
            )));
        }
        if !(self.coulombic_efficiency > 0.0 && self.coulombic_efficiency <= 1.0) {
            return Err(Error::Config(format!(
                "coulombic efficiency must lie in (0, 1], got {}",
                self.coulombic_efficiency
            )));
        }
        if self.diameter_m <= 0.0 || self.height_m <= 0.0 {
            return Err(Error::Config("cell dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Capacity expressed in mAh.
    pub fn capacity_mah(&self) -> f64 {
        self.nominal_capacity_c / MAH_TO_COULOMB
    }

    /// Cylinder radius, metres.
    pub fn radius_m(&self) -> f64 {
        0.5 * self.diameter_m
    }

    /// Full cylinder volume, m³.
    pub fn volume_m3(&self) -> f64 {
        std::f64::consts::PI * self.radius_m().powi(2) * self.height_m
    }

    /// Exterior surface area (lateral shell plus both end caps), m².
    pub fn surface_area_m2(&self) -> f64 {
        let r = self.radius_m();
        2.0 * std::f64::consts::PI * r * (self.height_m + r)
    }
}

/// Builder accepting boundary units (mAh) and filling defaults.
#[derive(Debug, Default, Clone)]
pub struct CellSpecBuilder {
    capacity_c: Option<f64>,
    nominal_voltage_v: Option<f64>,
    cutoff_voltage_v: Option<f64>,
    coulombic_efficiency: Option<f64>,
    diameter_m: Option<f64>,
    height_m: Option<f64>,
}

impl CellSpecBuilder {
    /// Capacity in mAh, converted once to coulombs.
    pub fn capacity_mah(mut self, mah: f64) -> Self {
        self.capacity_c = Some(mah * MAH_TO_COULOMB);
        self
    }

    pub fn capacity_coulombs(mut self, c: f64) -> Self {
        self.capacity_c = Some(c);
        self
    }

    pub fn nominal_voltage_v(mut self, v: f64) -> Self {
        self.nominal_voltage_v = Some(v);
        self
    }

    pub fn cutoff_voltage_v(mut self, v: f64) -> Self {
        self.cutoff_voltage_v = Some(v);
        self
    }

    pub fn coulombic_efficiency(mut self, eta: f64) -> Self {
        self.coulombic_efficiency = Some(eta);
        self
    }

    pub fn diameter_m(mut self, d: f64) -> Self {
        self.diameter_m = Some(d);
        self
    }

    pub fn height_m(mut self, h: f64) -> Self {
        self.height_m = Some(h);
        self
    }

    pub fn build(self) -> Result<CellSpec> {
        let missing = |field: &str| Error::Config(format!("cell spec field `{field}` not set"));
        CellSpec::new(
            self.capacity_c.ok_or_else(|| missing("capacity"))?,
            self.nominal_voltage_v.ok_or_else(|| missing("nominal_voltage_v"))?,
            self.cutoff_voltage_v.ok_or_else(|| missing("cutoff_voltage_v"))?,
            self.coulombic_efficiency.unwrap_or(1.0),
            self.diameter_m.ok_or_else(|| missing("diameter_m"))?,
            self.height_m.ok_or_else(|| missing("height_m"))?,
        )
    }
}
