//! Battery equivalent-circuit modeling toolkit for cylindrical primary cells.
//!
//! The crate covers the full characterization-to-prediction pipeline:
//!
//! * [`hppc`] — square-wave pulse-train excitation profiles and segmentation
//!   of measured traces into pulse/rest windows;
//! * [`ecm`] — a two-RC-branch Thevenin circuit with SOC-dependent
//!   components, integrated with an exact exponential stepper;
//! * [`ocv_fit`] — open-circuit-voltage extraction from relaxation windows
//!   and polynomial fitting;
//! * [`param_fit`] — bounded nonlinear least-squares identification of the
//!   SOC-indexed component table from voltage traces;
//! * [`thermal`] — an axisymmetric finite-volume electro-thermal solver fed
//!   by the circuit model, plus a lumped-mass fast path.
//!
//! Positive current means discharge throughout.

pub mod cell;
pub mod ecm;
pub mod error;
pub mod hppc;
pub mod ocv;
pub mod ocv_fit;
pub mod param_fit;
pub mod params;
pub mod presets;
pub mod thermal;
pub mod trace;

pub use cell::CellSpec;
pub use ecm::{simulate, step, terminal_voltage, EcmState, SimulationResult, Termination};
pub use error::{Error, Result};
pub use hppc::{generate_profile, segment_pulses, HppcProfileSpec, PulseSegmentation};
pub use ocv::OcvPolynomial;
pub use ocv_fit::{extract_ocv_points, fit_polynomial, FitReport, OcvSampleSet};
pub use param_fit::{fit, identifiability_report, FitProblem, FitResult};
pub use params::{RcParams, SocParameterTable};
pub use thermal::{
    cosimulate, lumped_temperature, CosimResult, CylMesh, ThermalBoundary, ThermalField,
    ThermalProps,
};
pub use trace::{ColumnMap, CurrentVoltageTrace};
