//! SOC-indexed lookup table of the five passive circuit components.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of the lookup table: series resistance plus two RC branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcParams {
    /// Ohmic series resistance, ohms.
    pub r_s: f64,
    /// First branch resistance, ohms.
    pub r_1: f64,
    /// Second branch resistance, ohms.
    pub r_2: f64,
    /// First branch capacitance, farads.
    pub c_1: f64,
    /// Second branch capacitance, farads.
    pub c_2: f64,
}

impl RcParams {
    pub fn new(r_s: f64, r_1: f64, r_2: f64, c_1: f64, c_2: f64) -> Self {
        RcParams { r_s, r_1, r_2, c_1, c_2 }
    }

    /// Time constant of the first branch, seconds.
    pub fn tau_1(&self) -> f64 {
        self.r_1 * self.c_1
    }

    /// Time constant of the second branch, seconds.
    pub fn tau_2(&self) -> f64 {
        self.r_2 * self.c_2
    }

    fn validate(&self, index: usize) -> Result<()> {
        let vals = [self.r_s, self.r_1, self.r_2, self.c_1, self.c_2];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("row {index}: non-finite component value")));
        }
        if self.r_s < 0.0 || self.r_1 < 0.0 || self.r_2 < 0.0 {
            return Err(Error::Config(format!("row {index}: resistances must be non-negative")));
        }
        if self.c_1 <= 0.0 || self.c_2 <= 0.0 {
            return Err(Error::Config(format!("row {index}: capacitances must be positive")));
        }
        Ok(())
    }
}

/// Piecewise-linear lookup of [`RcParams`] against state of charge.
///
/// Breakpoints are strictly ascending SOC values in [0, 1]; queries outside
/// the covered span clamp to the nearest endpoint row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocParameterTable {
    breakpoints: Vec<f64>,
    rows: Vec<RcParams>,
}

impl SocParameterTable {
    pub fn new(breakpoints: Vec<f64>, rows: Vec<RcParams>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::Config(format!(
                "parameter table needs at least 2 breakpoints, got {}",
                breakpoints.len()
            )));
        }
        if breakpoints.len() != rows.len() {
            return Err(Error::Config(format!(
                "breakpoint/row count mismatch: {} vs {}",
                breakpoints.len(),
                rows.len()
            )));
        }
        for (i, &s) in breakpoints.iter().enumerate() {
            if !s.is_finite() || !(0.0..=1.0).contains(&s) {
                return Err(Error::Config(format!("breakpoint {i} out of [0, 1]: {s}")));
            }
            if i > 0 && s <= breakpoints[i - 1] {
                return Err(Error::Config(format!(
                    "breakpoints must be strictly ascending (index {i}: {} after {})",
                    s,
                    breakpoints[i - 1]
                )));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            row.validate(i)?;
        }
        Ok(SocParameterTable { breakpoints, rows })
    }

    /// Builds a table with the same row at two breakpoints spanning [0, 1];
    /// interpolation then returns that row for every SOC.
    pub fn constant(row: RcParams) -> Result<Self> {
        SocParameterTable::new(vec![0.0, 1.0], vec![row, row])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn rows(&self) -> &[RcParams] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breakpoints.is_empty()
    }

    /// Replaces one row; used by the parameter fitter.
    pub fn set_row(&mut self, index: usize, row: RcParams) {
        self.rows[index] = row;
    }

    /// Piecewise-linear interpolation at `soc`, clamping outside the covered
    /// span. Exactly at a breakpoint the stored row is returned unchanged.
    pub fn interpolate(&self, soc: f64) -> RcParams {
        let bp = &self.breakpoints;
        if soc <= bp[0] {
            return self.rows[0];
        }
        if soc >= bp[bp.len() - 1] {
            return self.rows[bp.len() - 1];
        }
        // partition_point: first index with breakpoint >= soc; soc is inside the span here.
        let hi = bp.partition_point(|&b| b < soc);
        if bp[hi] == soc {
            return self.rows[hi];
        }
        let lo = hi - 1;
        let t = (soc - bp[lo]) / (bp[hi] - bp[lo]);
        let a = &self.rows[lo];
        let b = &self.rows[hi];
        let lerp = |x: f64, y: f64| (1.0 - t) * x + t * y;
        RcParams {
            r_s: lerp(a.r_s, b.r_s),
            r_1: lerp(a.r_1, b.r_1),
            r_2: lerp(a.r_2, b.r_2),
            c_1: lerp(a.c_1, b.c_1),
            c_2: lerp(a.c_2, b.c_2),
        }
    }

    /// Smallest time constant anywhere in the table, seconds.
    pub fn min_time_constant(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.tau_1().min(r.tau_2()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest time constant anywhere in the table, seconds.
    pub fn max_time_constant(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.tau_1().max(r.tau_2()))
            .fold(0.0, f64::max)
    }

    /// Reads a table from CSV with header `soc,R_s_ohm,R_1_ohm,R_2_ohm,C_1_F,C_2_F`.
    /// Lines starting with `#` and blank lines are ignored.
    pub fn from_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut breakpoints = Vec::new();
        let mut rows = Vec::new();
        let mut header_seen = false;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if !header_seen {
                let expected = ["soc", "R_s_ohm", "R_1_ohm", "R_2_ohm", "C_1_F", "C_2_F"];
                if fields != expected {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!(
                            "expected header `{}`, got `{trimmed}`",
                            expected.join(",")
                        ),
                    });
                }
                header_seen = true;
                continue;
            }
            if fields.len() != 6 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 6 fields, got {}", fields.len()),
                });
            }
            let mut vals = [0.0; 6];
            for (v, raw) in vals.iter_mut().zip(&fields) {
                *v = raw.parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("bad number `{raw}`: {e}"),
                })?;
            }
            breakpoints.push(vals[0]);
            rows.push(RcParams::new(vals[1], vals[2], vals[3], vals[4], vals[5]));
        }
        if !header_seen {
            return Err(Error::Parse { line: 1, message: "missing header row".into() });
        }
        SocParameterTable::new(breakpoints, rows)
    }

    /// Writes the table in the same CSV layout accepted by [`from_csv`](Self::from_csv).
    /// Values use shortest round-trip formatting, so a write/read cycle is lossless.
    pub fn to_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "soc,R_s_ohm,R_1_ohm,R_2_ohm,C_1_F,C_2_F")?;
        for (s, r) in self.breakpoints.iter().zip(&self.rows) {
            writeln!(writer, "{},{},{},{},{},{}", s, r.r_s, r.r_1, r.r_2, r.c_1, r.c_2)?;
        }
        Ok(())
    }
}
