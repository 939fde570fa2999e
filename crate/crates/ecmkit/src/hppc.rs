//! Pulse-train excitation profiles and segmentation of measured traces into
//! pulse/rest windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::CurrentVoltageTrace;

/// Whether a period opens with the pulse or with the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulsePhase {
    /// Discharge begins immediately at t = 0.
    #[default]
    PulseFirst,
    RestFirst,
}

/// Square-wave discharge profile: `amplitude_a` for the `duty_cycle` fraction
/// of each period, zero otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HppcProfileSpec {
    pub amplitude_a: f64,
    pub frequency_hz: f64,
    pub duty_cycle: f64,
    pub duration_s: f64,
    pub sample_interval_s: f64,
    pub phase: PulsePhase,
}

impl Default for HppcProfileSpec {
    /// The C/2 characterization profile for the reference cell: 1.5 A pulses
    /// at 2.8 mHz, 50% duty, sampled at 0.4 Sa/s for four hours.
    fn default() -> Self {
        HppcProfileSpec {
            amplitude_a: 1.5,
            frequency_hz: 2.8e-3,
            duty_cycle: 0.5,
            duration_s: 14400.0,
            sample_interval_s: 2.5,
            phase: PulsePhase::PulseFirst,
        }
    }
}

impl HppcProfileSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude_a > 0.0 && self.amplitude_a.is_finite()) {
            return Err(Error::Config(format!(
                "pulse amplitude must be positive, got {}",
                self.amplitude_a
            )));
        }
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return Err(Error::Config(format!(
                "pulse frequency must be positive, got {}",
                self.frequency_hz
            )));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle < 1.0) {
            return Err(Error::Config(format!(
                "duty cycle must lie strictly inside (0, 1), got {}",
                self.duty_cycle
            )));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config(format!(
                "profile duration must be positive, got {}",
                self.duration_s
            )));
        }
        if !(self.sample_interval_s > 0.0) {
            return Err(Error::Config(format!(
                "sample interval must be positive, got {}",
                self.sample_interval_s
            )));
        }
        if self.sample_interval_s >= 0.5 * self.period_s() {
            return Err(Error::Config(format!(
                "sample interval {} s aliases the {} s period; keep it under the half-period",
                self.sample_interval_s,
                self.period_s()
            )));
        }
        Ok(())
    }

    pub fn period_s(&self) -> f64 {
        1.0 / self.frequency_hz
    }

    pub fn pulse_width_s(&self) -> f64 {
        self.duty_cycle * self.period_s()
    }

    /// Instantaneous current at time `t_s` (t = 0 is the profile start).
    pub fn current_at(&self, t_s: f64) -> f64 {
        let period = self.period_s();
        let in_period = t_s - period * (t_s / period).floor();
        let frac = in_period / period;
        let on = match self.phase {
            PulsePhase::PulseFirst => frac < self.duty_cycle,
            PulsePhase::RestFirst => frac >= 1.0 - self.duty_cycle,
        };
        if on {
            self.amplitude_a
        } else {
            0.0
        }
    }

    /// Number of samples of the generated profile (half-open span
    /// [0, duration)).
    pub fn sample_count(&self) -> usize {
        (self.duration_s / self.sample_interval_s).ceil().max(1.0) as usize
    }
}

/// Samples the square wave over [0, duration). The result has no voltage
/// column and round-trips losslessly through the trace CSV format.
pub fn generate_profile(spec: &HppcProfileSpec) -> Result<CurrentVoltageTrace> {
    spec.validate()?;
    let n = spec.sample_count();
    let mut times = Vec::with_capacity(n);
    let mut currents = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * spec.sample_interval_s;
        times.push(t);
        currents.push(spec.current_at(t));
    }
    CurrentVoltageTrace::new(times, currents, None)
}

/// One detected pulse and the rest that follows it; all fields are sample
/// indices into the segmented trace. The pulse occupies `on_start..on_end`,
/// the rest `on_end..rest_end` (half-open ranges).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseWindow {
    pub on_start: usize,
    pub on_end: usize,
    pub rest_end: usize,
}

impl PulseWindow {
    pub fn on_len(&self) -> usize {
        self.on_end - self.on_start
    }

    pub fn rest_len(&self) -> usize {
        self.rest_end - self.on_end
    }
}

/// Pulse/rest decomposition of a trace produced by [`segment_pulses`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSegmentation {
    pub pulses: Vec<PulseWindow>,
    pub threshold_used_a: f64,
    /// Above-threshold runs shorter than the 3-sample minimum, dropped as
    /// noise spikes; rests span across them.
    pub n_discarded_short: usize,
}

impl PulseSegmentation {
    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }
}

/// Minimum run length (in samples) for an above-threshold run to count as a
/// pulse; shorter runs are treated as noise spikes.
pub const MIN_PULSE_SAMPLES: usize = 3;

/// Splits a trace into pulse and rest windows by thresholding |I|.
///
/// A sample is "on" when |I| exceeds the threshold; maximal on-runs of at
/// least [`MIN_PULSE_SAMPLES`] become pulses and each rest extends to the
/// next accepted pulse (or the trace end). Shorter runs are counted and
/// skipped, which debounces isolated measurement spikes. A trace that never
/// crosses the threshold yields an empty segmentation.
pub fn segment_pulses(
    trace: &CurrentVoltageTrace,
    threshold_a: f64,
) -> Result<PulseSegmentation> {
    if !(threshold_a > 0.0 && threshold_a.is_finite()) {
        return Err(Error::Argument(format!(
            "segmentation threshold must be positive, got {threshold_a}"
        )));
    }
    let on: Vec<bool> = trace.currents_a().iter().map(|i| i.abs() > threshold_a).collect();

    // Collect maximal on-runs as (start, end) half-open index pairs.
    let mut runs = Vec::new();
    let mut k = 0;
    while k < on.len() {
        if on[k] {
            let start = k;
            while k < on.len() && on[k] {
                k += 1;
            }
            runs.push((start, k));
        } else {
            k += 1;
        }
    }

    let mut pulses: Vec<PulseWindow> = Vec::new();
    let mut n_discarded_short = 0;
    for &(start, end) in &runs {
        if end - start < MIN_PULSE_SAMPLES {
            n_discarded_short += 1;
            continue;
        }
        if let Some(prev) = pulses.last_mut() {
            prev.rest_end = start;
        }
        pulses.push(PulseWindow { on_start: start, on_end: end, rest_end: trace.len() });
    }
    Ok(PulseSegmentation { pulses, threshold_used_a: threshold_a, n_discarded_short })
}
