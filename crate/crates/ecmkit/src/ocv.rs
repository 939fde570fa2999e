//! Open-circuit voltage as a fixed degree-5 polynomial in state of charge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of coefficients of the fixed degree-5 polynomial.
pub const OCV_COEFF_COUNT: usize = 6;

/// Sanity bounds for any OCV evaluation over SOC ∈ [0, 1], volts.
const OCV_SANITY_RANGE: (f64, f64) = (0.0, 5.0);

/// Clamps a state of charge to [0, 1]; second value reports whether clamping occurred.
pub fn clamp_soc(soc: f64) -> (f64, bool) {
    if soc < 0.0 {
        (0.0, true)
    } else if soc > 1.0 {
        (1.0, true)
    } else {
        (soc, false)
    }
}

/// Degree-5 open-circuit-voltage polynomial, coefficients highest degree first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcvPolynomial {
    coefficients: [f64; OCV_COEFF_COUNT],
}

impl OcvPolynomial {
    /// Builds a polynomial, checking the coefficient count and that evaluation
    /// over SOC ∈ [0, 1] stays inside a physically sane voltage window.
    pub fn new(coefficients: &[f64]) -> Result<Self> {
        let arr: [f64; OCV_COEFF_COUNT] = coefficients.try_into().map_err(|_| {
            Error::Config(format!(
                "OCV polynomial needs exactly {OCV_COEFF_COUNT} coefficients (highest degree first), got {}",
                coefficients.len()
            ))
        })?;
        if arr.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("OCV coefficients must be finite".into()));
        }
        let poly = OcvPolynomial { coefficients: arr };
        // Dense sampling is plenty for a degree-5 polynomial's range check.
        for k in 0..=1000 {
            let v = poly.eval(k as f64 / 1000.0);
            if !(OCV_SANITY_RANGE.0..=OCV_SANITY_RANGE.1).contains(&v) {
                return Err(Error::Config(format!(
                    "OCV polynomial leaves the sane range {:?} V at soc={} (value {v} V)",
                    OCV_SANITY_RANGE,
                    k as f64 / 1000.0
                )));
            }
        }
        Ok(poly)
    }

    /// Coefficients, highest degree first.
    pub fn coefficients(&self) -> &[f64; OCV_COEFF_COUNT] {
        &self.coefficients
    }

    /// Evaluates the polynomial at the given SOC (clamped to [0, 1]) via
    /// Horner's scheme.
    pub fn eval(&self, soc: f64) -> f64 {
        let (s, _) = clamp_soc(soc);
        self.coefficients.iter().fold(0.0, |acc, &c| acc * s + c)
    }

    /// Like [`eval`](Self::eval) but also reports whether the input was clamped.
    pub fn eval_flagged(&self, soc: f64) -> (f64, bool) {
        let (s, clamped) = clamp_soc(soc);
        (self.eval(s), clamped)
    }
}
