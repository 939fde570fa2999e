//! Declarative run configuration.
//!
//! A run is described by a TOML file with one section per concern; key names
//! carry their units (`capacity_mah`, `frequency_hz`, `h_conv_w_m2k`), so a
//! value in the wrong unit is visible at the call site and unknown keys are
//! rejected at parse time. Command-line flags override file values; the
//! fully resolved configuration is embedded in every output.

use std::fs;
use std::path::{Path, PathBuf};

use ecmkit::hppc::HppcProfileSpec;
use ecmkit::param_fit::FitStrategy;
use ecmkit::thermal::{ThermalBoundary, ThermalProps};
use ecmkit::{CellSpec, Error, OcvPolynomial, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Where outputs land; `--out` overrides.
    pub out_dir: Option<PathBuf>,
    pub cell: Option<CellConfig>,
    /// Generated excitation; used when no trace file is given.
    pub profile: Option<HppcProfileSpec>,
    pub inputs: InputsConfig,
    pub ocv: OcvConfig,
    pub simulate: SimulateConfig,
    pub fit_ocv: FitOcvConfig,
    pub fit_params: FitParamsConfig,
    pub thermal: ThermalConfig,
}

impl RunConfig {
    /// Loads the file, or returns the all-defaults config when no path is
    /// given (commands then insist on the sections they need).
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|err| file_error(path, err))?;
        toml::from_str(&text)
            .map_err(|err| Error::Config(format!("{}: {err}", path.display())))
    }

    pub fn cell_spec(&self) -> Result<CellSpec> {
        self.cell
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a [cell] section".into()))?
            .to_spec()
    }

    pub fn ocv_polynomial(&self) -> Result<OcvPolynomial> {
        let coefficients = self.ocv.coefficients.as_ref().ok_or_else(|| {
            Error::Config(
                "this command needs [ocv] coefficients (six values, highest degree first)".into(),
            )
        })?;
        OcvPolynomial::new(coefficients)
    }
}

/// Cell constants; mirrors the library's builder field by field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub capacity_mah: f64,
    pub nominal_voltage_v: f64,
    pub cutoff_voltage_v: f64,
    #[serde(default = "default_efficiency")]
    pub coulombic_efficiency: f64,
    pub diameter_m: f64,
    pub height_m: f64,
}

fn default_efficiency() -> f64 {
    1.0
}

impl CellConfig {
    pub fn to_spec(&self) -> Result<CellSpec> {
        CellSpec::builder()
            .capacity_mah(self.capacity_mah)
            .nominal_voltage_v(self.nominal_voltage_v)
            .cutoff_voltage_v(self.cutoff_voltage_v)
            .coulombic_efficiency(self.coulombic_efficiency)
            .diameter_m(self.diameter_m)
            .height_m(self.height_m)
            .build()
    }
}

/// Paths to externally supplied data files.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputsConfig {
    /// Measured or generated excitation/voltage trace.
    pub trace_csv: Option<PathBuf>,
    /// SOC-indexed component table.
    pub params_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcvConfig {
    /// Polynomial coefficients, highest degree first.
    pub coefficients: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub initial_soc: f64,
    /// Internal integrator step cap, s (default: the finest trace interval,
    /// capped at 2.5 s).
    pub dt_max_s: Option<f64>,
    /// Gaussian measurement noise on the written voltages, mV (0 = off).
    pub noise_mv: f64,
    /// Emit a gnuplot script for the trace.
    pub plot_script: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { initial_soc: 1.0, dt_max_s: None, noise_mv: 0.0, plot_script: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOcvConfig {
    pub degree: usize,
    pub initial_soc: f64,
    /// Pulse-detection current threshold, A (default: half the trace maximum).
    pub threshold_a: Option<f64>,
}

impl Default for FitOcvConfig {
    fn default() -> Self {
        FitOcvConfig { degree: 5, initial_soc: 1.0, threshold_a: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitParamsConfig {
    /// Evenly spaced SOC breakpoints: k/n for k = 1..=n.
    pub n_breakpoints: usize,
    pub max_iterations: usize,
    pub strategy: FitStrategy,
    /// Warm-start table on the same breakpoint grid.
    pub initial_table_csv: Option<PathBuf>,
}

impl Default for FitParamsConfig {
    fn default() -> Self {
        FitParamsConfig {
            n_breakpoints: 20,
            max_iterations: 500,
            strategy: FitStrategy::default(),
            initial_table_csv: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalConfig {
    pub n_r: usize,
    pub n_z: usize,
    /// Co-simulation window, s.
    pub dt_s: f64,
    pub props: ThermalProps,
    pub boundary: ThermalBoundary,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        ThermalConfig {
            n_r: 20,
            n_z: 60,
            dt_s: 10.0,
            props: ThermalProps::default(),
            boundary: ThermalBoundary::default(),
        }
    }
}

/// Wraps a file error so a missing input names the offending path.
pub fn file_error(path: &Path, err: std::io::Error) -> Error {
    if err.kind() == std::io::ErrorKind::NotFound {
        Error::Config(format!("input file not found: {}", path.display()))
    } else {
        Error::Io(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert!(cfg.cell.is_none());
        assert_eq!(cfg.fit_params.n_breakpoints, 20);
        assert_eq!(cfg.thermal.n_r, 20);
        assert_eq!(cfg.simulate.initial_soc, 1.0);
    }

    #[test]
    fn full_config_round_trips_every_section() {
        let text = r#"
            out_dir = "runs/demo"

            [cell]
            capacity_mah = 3000.0
            nominal_voltage_v = 1.5
            cutoff_voltage_v = 0.8
            diameter_m = 0.0145
            height_m = 0.0505

            [profile]
            amplitude_a = 1.5
            frequency_hz = 2.8e-3
            duty_cycle = 0.5
            duration_s = 14400.0
            sample_interval_s = 2.5
            phase = "pulse_first"

            [inputs]
            params_csv = "table.csv"

            [ocv]
            coefficients = [-4.33, 14.83, -19.66, 12.47, -3.87, 1.59]

            [fit_params]
            n_breakpoints = 10
            max_iterations = 200
            strategy = "block_then_polish"

            [thermal]
            n_r = 10
            n_z = 30
            dt_s = 5.0

            [thermal.props]
            k_radial_w_m_k = 2.5

            [thermal.boundary]
            h_conv_w_m2k = 12.0
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.out_dir.as_deref(), Some(Path::new("runs/demo")));
        let spec = cfg.cell_spec().unwrap();
        assert!((spec.capacity_mah() - 3000.0).abs() < 1e-9);
        assert!(cfg.ocv_polynomial().is_ok());
        assert_eq!(cfg.fit_params.n_breakpoints, 10);
        assert_eq!(cfg.thermal.n_z, 30);
        // Untouched nested keys keep their defaults.
        assert_eq!(cfg.thermal.props.k_axial_w_m_k, 30.0);
        assert_eq!(cfg.thermal.boundary.h_conv_w_m2k, 12.0);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = toml::from_str::<RunConfig>("capacity_mah = 3.0").unwrap_err();
        assert!(err.to_string().contains("capacity_mah"));
    }

    #[test]
    fn missing_required_sections_read_as_usage_errors() {
        let cfg = RunConfig::default();
        assert!(cfg.cell_spec().unwrap_err().is_usage());
        assert!(cfg.ocv_polynomial().unwrap_err().is_usage());
    }
}
