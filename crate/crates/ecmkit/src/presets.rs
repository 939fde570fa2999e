//! Built-in reference dataset for a 3000 mAh LiFeS2 AA primary cell.
//!
//! The values were identified from pulse-train characterization of an
//! off-the-shelf 14.5 mm x 50.5 mm cell and are the defaults used by the
//! command-line tools when no user dataset is supplied.

use crate::cell::CellSpec;
use crate::ocv::OcvPolynomial;
use crate::params::{RcParams, SocParameterTable};

/// Geometry and ratings of the reference cell.
pub fn lifes2_aa_cell() -> CellSpec {
    CellSpec::builder()
        .capacity_mah(3000.0)
        .nominal_voltage_v(1.5)
        .cutoff_voltage_v(0.8)
        .diameter_m(14.5e-3)
        .height_m(50.5e-3)
        .build()
        .expect("reference cell spec is valid")
}

/// Open-circuit voltage of the reference cell as a degree-5 polynomial in SOC.
pub fn lifes2_aa_ocv() -> OcvPolynomial {
    OcvPolynomial::new(&[2.33, -6.36, 6.62, -3.35, 1.0, 1.35])
        .expect("reference OCV coefficients are valid")
}

/// Passive-component lookup table of the reference cell, identified at
/// twenty evenly spaced SOC breakpoints.
pub fn lifes2_aa_params() -> SocParameterTable {
    let breakpoints = vec![
        0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70,
        0.75, 0.80, 0.85, 0.90, 0.95, 1.00,
    ];
    let rows = vec![
        RcParams::new(2.60e-5, 2.68e-1, 8.51e-2, 2.33e2, 4.00e3),
        RcParams::new(2.32e-4, 3.47e-1, 1.71e-3, 1.92e2, 3.08e3),
        RcParams::new(2.66e-2, 2.98e-1, 7.76e-4, 1.99e2, 5.33e3),
        RcParams::new(1.13e-2, 3.12e-1, 3.44e-4, 1.73e2, 3.70e3),
        RcParams::new(1.07e-2, 2.82e-1, 1.55e-2, 1.82e2, 3.89e3),
        RcParams::new(1.48e-2, 2.67e-1, 1.45e-2, 1.85e2, 1.28e3),
        RcParams::new(1.18e-2, 2.64e-1, 8.72e-3, 1.76e2, 1.23e3),
        RcParams::new(1.29e-2, 2.56e-1, 9.20e-3, 1.68e2, 1.34e3),
        RcParams::new(2.14e-2, 2.39e-1, 6.93e-3, 1.71e2, 1.39e3),
        RcParams::new(2.82e-2, 2.22e-1, 9.52e-3, 1.60e2, 1.54e3),
        RcParams::new(3.19e-2, 2.01e-1, 2.11e-2, 1.21e2, 1.65e3),
        RcParams::new(3.19e-2, 1.91e-1, 2.47e-2, 1.05e2, 1.78e3),
        RcParams::new(3.25e-2, 1.80e-1, 2.89e-2, 8.71e1, 1.86e3),
        RcParams::new(3.13e-2, 1.68e-1, 3.26e-2, 1.74e1, 1.91e3),
        RcParams::new(5.49e-2, 1.40e-1, 3.16e-2, 6.40e1, 1.86e3),
        RcParams::new(8.20e-2, 1.09e-1, 3.27e-2, 1.09e2, 2.01e3),
        RcParams::new(1.11e-1, 8.03e-2, 3.27e-2, 1.62e2, 2.08e3),
        RcParams::new(1.46e-1, 5.24e-2, 3.20e-2, 2.22e2, 2.46e3),
        RcParams::new(1.64e-1, 4.05e-2, 3.25e-2, 2.77e2, 3.50e3),
        RcParams::new(1.75e-1, 5.45e-2, 6.80e-2, 4.20e2, 9.24e3),
    ];
    SocParameterTable::new(breakpoints, rows).expect("reference parameter table is valid")
}
