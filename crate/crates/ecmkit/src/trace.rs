//! Time-series container for current/voltage records and its CSV form.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::cell::CellSpec;
use crate::error::{Error, Result};

/// Maps CSV header names onto the trace columns.
///
/// `voltage: None` skips the voltage column entirely; when the named voltage
/// column is absent from the file the trace simply has no voltage data (the
/// generated excitation profiles are current-only). Time and current columns
/// are always required. `invert_current` accommodates loggers that record
/// discharge as negative; the loaded trace always uses positive-discharge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub time: String,
    pub current: String,
    pub voltage: Option<String>,
    pub invert_current: bool,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            time: "time_s".into(),
            current: "current_A".into(),
            voltage: Some("voltage_V".into()),
            invert_current: false,
        }
    }
}

/// Sampled (t, I[, V]) records with strictly increasing timestamps.
/// Positive current means discharge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentVoltageTrace {
    times_s: Vec<f64>,
    currents_a: Vec<f64>,
    voltages_v: Option<Vec<f64>>,
}

impl CurrentVoltageTrace {
    pub fn new(
        times_s: Vec<f64>,
        currents_a: Vec<f64>,
        voltages_v: Option<Vec<f64>>,
    ) -> Result<Self> {
        if times_s.is_empty() {
            return Err(Error::Argument("trace must contain at least one sample".into()));
        }
        if currents_a.len() != times_s.len() {
            return Err(Error::Argument(format!(
                "current column length {} does not match time column length {}",
                currents_a.len(),
                times_s.len()
            )));
        }
        if let Some(v) = &voltages_v {
            if v.len() != times_s.len() {
                return Err(Error::Argument(format!(
                    "voltage column length {} does not match time column length {}",
                    v.len(),
                    times_s.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Argument("non-finite voltage sample".into()));
            }
        }
        if times_s.iter().any(|t| !t.is_finite()) || currents_a.iter().any(|i| !i.is_finite()) {
            return Err(Error::Argument("non-finite time or current sample".into()));
        }
        for k in 1..times_s.len() {
            if times_s[k] <= times_s[k - 1] {
                return Err(Error::Argument(format!(
                    "timestamps must be strictly increasing (sample {k}: {} after {})",
                    times_s[k],
                    times_s[k - 1]
                )));
            }
        }
        Ok(CurrentVoltageTrace { times_s, currents_a, voltages_v })
    }

    pub fn times_s(&self) -> &[f64] {
        &self.times_s
    }

    pub fn currents_a(&self) -> &[f64] {
        &self.currents_a
    }

    pub fn voltages_v(&self) -> Option<&[f64]> {
        self.voltages_v.as_deref()
    }

    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.times_s[self.times_s.len() - 1] - self.times_s[0]
    }

    /// Lower median of the consecutive sample intervals, or `None` for a
    /// single-sample trace. A robust notion of the trace's sampling rate:
    /// unlike the minimum it is not thrown off by one anomalously short
    /// interval, such as a depletion-crossing sample appended a hair after
    /// the last regular timestamp.
    pub fn median_interval_s(&self) -> Option<f64> {
        if self.len() < 2 {
            return None;
        }
        let mut intervals: Vec<f64> =
            self.times_s.windows(2).map(|w| w[1] - w[0]).collect();
        intervals.sort_by(|a, b| a.partial_cmp(b).expect("intervals are finite"));
        Some(intervals[(intervals.len() - 1) / 2])
    }

    /// Returns a copy carrying the given voltage column.
    pub fn with_voltages(&self, voltages_v: Vec<f64>) -> Result<Self> {
        CurrentVoltageTrace::new(self.times_s.clone(), self.currents_a.clone(), Some(voltages_v))
    }

    /// Largest |I| in the trace, amperes.
    pub fn max_abs_current_a(&self) -> f64 {
        self.currents_a.iter().fold(0.0, |m, &i| m.max(i.abs()))
    }

    /// Trapezoidal integral of current over the whole trace, coulombs.
    /// Positive for net discharge.
    pub fn charge_integral_c(&self) -> f64 {
        self.cumulative_charge_c()[self.len() - 1]
    }

    /// Running trapezoidal integral of current, coulombs; entry k is the
    /// charge withdrawn between the first sample and sample k (entry 0 is 0).
    pub fn cumulative_charge_c(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        out.push(0.0);
        for k in 1..self.len() {
            let dt = self.times_s[k] - self.times_s[k - 1];
            acc += 0.5 * (self.currents_a[k] + self.currents_a[k - 1]) * dt;
            out.push(acc);
        }
        out
    }

    /// Coulomb-counted SOC at every sample, starting from `initial_soc`,
    /// clamped to [0, 1].
    pub fn soc_series(&self, spec: &CellSpec, initial_soc: f64) -> Vec<f64> {
        let scale = spec.coulombic_efficiency / spec.nominal_capacity_c;
        self.cumulative_charge_c()
            .iter()
            .map(|q| (initial_soc - scale * q).clamp(0.0, 1.0))
            .collect()
    }

    /// Reads a trace from CSV. Lines starting with `#` and blank lines are
    /// skipped; the first remaining line must be the header. Parse errors cite
    /// the 1-based line number in the stream.
    pub fn read_csv<R: BufRead>(reader: R, map: &ColumnMap) -> Result<Self> {
        let mut header: Option<(usize, usize, Option<usize>)> = None;
        let mut times = Vec::new();
        let mut currents = Vec::new();
        let mut voltages: Option<Vec<f64>> = None;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            match header {
                None => {
                    let find = |name: &str| fields.iter().position(|f| *f == name);
                    let t_col = find(&map.time).ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: format!("missing column `{}` in header `{trimmed}`", map.time),
                    })?;
                    let i_col = find(&map.current).ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: format!("missing column `{}` in header `{trimmed}`", map.current),
                    })?;
                    let v_col = map.voltage.as_deref().and_then(find);
                    if v_col.is_some() {
                        voltages = Some(Vec::new());
                    }
                    header = Some((t_col, i_col, v_col));
                }
                Some((t_col, i_col, v_col)) => {
                    let get = |col: usize| -> Result<f64> {
                        let raw = fields.get(col).ok_or_else(|| Error::Parse {
                            line: line_no,
                            message: format!(
                                "expected at least {} fields, got {}",
                                col + 1,
                                fields.len()
                            ),
                        })?;
                        raw.parse::<f64>().map_err(|e| Error::Parse {
                            line: line_no,
                            message: format!("bad number `{raw}`: {e}"),
                        })
                    };
                    let t = get(t_col)?;
                    if let Some(&prev) = times.last() {
                        if t <= prev {
                            return Err(Error::Parse {
                                line: line_no,
                                message: format!(
                                    "timestamps must be strictly increasing ({t} after {prev})"
                                ),
                            });
                        }
                    }
                    let sign = if map.invert_current { -1.0 } else { 1.0 };
                    times.push(t);
                    currents.push(sign * get(i_col)?);
                    if let (Some(vs), Some(col)) = (voltages.as_mut(), v_col) {
                        vs.push(get(col)?);
                    }
                }
            }
        }
        if header.is_none() {
            return Err(Error::Parse { line: 1, message: "missing header row".into() });
        }
        CurrentVoltageTrace::new(times, currents, voltages)
    }

    /// Writes `time_s,current_A[,voltage_V]` rows readable by
    /// [`read_csv`](Self::read_csv) with the default column map. Values use
    /// shortest round-trip formatting, so a write/read cycle is lossless.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        match &self.voltages_v {
            Some(vs) => {
                writeln!(writer, "time_s,current_A,voltage_V")?;
                for ((t, i), v) in self.times_s.iter().zip(&self.currents_a).zip(vs) {
                    writeln!(writer, "{t},{i},{v}")?;
                }
            }
            None => {
                writeln!(writer, "time_s,current_A")?;
                for (t, i) in self.times_s.iter().zip(&self.currents_a) {
                    writeln!(writer, "{t},{i}")?;
                }
            }
        }
        Ok(())
    }
}
