//! Open-circuit-voltage extraction from relaxation windows and polynomial
//! fitting of the OCV-vs-SOC curve.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cell::CellSpec;
use crate::error::{Error, Result};
use crate::hppc::PulseSegmentation;
use crate::ocv::{OcvPolynomial, OCV_COEFF_COUNT};
use crate::trace::CurrentVoltageTrace;

/// Rest windows shorter than this many samples are excluded from extraction;
/// the voltage cannot have settled meaningfully in so few points.
pub const MIN_REST_SAMPLES: usize = 10;

/// An extracted point is flagged when the window's voltage maximum exceeds
/// its final sample by more than this, i.e. the recovery was not monotone.
pub const PEAK_DEVIATION_TOL_V: f64 = 1e-3;

/// One extracted open-circuit-voltage sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcvPoint {
    /// Coulomb-counted SOC at the sample's timestamp.
    pub soc: f64,
    pub ocv_v: f64,
    /// Index of the pulse whose rest produced this point; −1 for a rest
    /// preceding the first pulse (or a pulse-free trace).
    pub source_pulse: isize,
    /// True when the window max exceeded the final sample by more than
    /// [`PEAK_DEVIATION_TOL_V`] — non-monotone recovery, likely noise.
    pub deviated: bool,
}

/// Extraction output: the points plus a count of rests too short to use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcvSampleSet {
    pub points: Vec<OcvPoint>,
    pub n_excluded_short: usize,
}

impl OcvSampleSet {
    pub fn from_points(points: Vec<(f64, f64)>) -> Self {
        OcvSampleSet {
            points: points
                .into_iter()
                .map(|(soc, ocv_v)| OcvPoint { soc, ocv_v, source_pulse: -1, deviated: false })
                .collect(),
            n_excluded_short: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Pulls one OCV sample out of every sufficiently long rest window.
///
/// The sample is the window's final voltage — the most-relaxed point, which
/// equals the recovery peak for monotone relaxation and shrugs off isolated
/// spikes. Its SOC comes from coulomb counting the measured current from
/// `initial_soc`. A trace with no detected pulses is treated as one long rest.
pub fn extract_ocv_points(
    trace: &CurrentVoltageTrace,
    seg: &PulseSegmentation,
    spec: &CellSpec,
    initial_soc: f64,
) -> Result<OcvSampleSet> {
    let voltages = trace
        .voltages_v()
        .ok_or_else(|| Error::Argument("trace has no voltage column".into()))?;
    let soc = trace.soc_series(spec, initial_soc);

    // (source pulse, window range) for every rest in trace order.
    let mut windows: Vec<(isize, usize, usize)> = Vec::new();
    if seg.is_empty() {
        windows.push((-1, 0, trace.len()));
    } else {
        let first_on = seg.pulses[0].on_start;
        if first_on > 0 {
            windows.push((-1, 0, first_on));
        }
        for (i, w) in seg.pulses.iter().enumerate() {
            windows.push((i as isize, w.on_end, w.rest_end));
        }
    }

    let mut points = Vec::new();
    let mut n_excluded_short = 0;
    for (source_pulse, start, end) in windows {
        if end - start < MIN_REST_SAMPLES {
            n_excluded_short += 1;
            continue;
        }
        let last = end - 1;
        let v_final = voltages[last];
        let v_max = voltages[start..end].iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        points.push(OcvPoint {
            soc: soc[last],
            ocv_v: v_final,
            source_pulse,
            deviated: v_max - v_final > PEAK_DEVIATION_TOL_V,
        });
    }
    Ok(OcvSampleSet { points, n_excluded_short })
}

/// Least-squares polynomial fit of OCV against SOC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Fitted coefficients, highest degree first (length = degree + 1).
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
    pub residual_rms_v: f64,
    pub n_points: usize,
}

impl FitReport {
    /// Converts to the fixed degree-5 polynomial form, zero-padding lower
    /// fitted degrees at the front.
    pub fn to_ocv_polynomial(&self) -> Result<OcvPolynomial> {
        if self.coefficients.len() > OCV_COEFF_COUNT {
            return Err(Error::Fit(format!(
                "degree {} exceeds the fixed polynomial degree {}",
                self.coefficients.len() - 1,
                OCV_COEFF_COUNT - 1
            )));
        }
        let mut padded = vec![0.0; OCV_COEFF_COUNT - self.coefficients.len()];
        padded.extend_from_slice(&self.coefficients);
        OcvPolynomial::new(&padded)
    }
}

/// Fits a degree-`degree` polynomial to the sample set by ordinary least
/// squares on the Vandermonde system, solved through QR orthogonalization
/// (never the normal equations — squaring the condition number is what ruins
/// polynomial fits). Needs at least `degree + 2` points.
pub fn fit_polynomial(samples: &OcvSampleSet, degree: usize) -> Result<FitReport> {
    let n = samples.len();
    if n < degree + 2 {
        return Err(Error::Fit(format!(
            "degree-{degree} fit needs at least {} points, got {n}",
            degree + 2
        )));
    }
    let mut socs: Vec<f64> = samples.points.iter().map(|p| p.soc).collect();
    socs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if socs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Fit("duplicate SOC values make the fit rank-deficient".into()));
    }

    let n_coef = degree + 1;
    let a = DMatrix::from_fn(n, n_coef, |r, c| {
        samples.points[r].soc.powi((degree - c) as i32)
    });
    let y = DVector::from_fn(n, |r, _| samples.points[r].ocv_v);

    let qr = a.clone().qr();
    let r = qr.r();
    let r_max = (0..n_coef).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..n_coef).any(|i| r[(i, i)].abs() < 1e-12 * r_max) {
        return Err(Error::Fit("rank-deficient Vandermonde system".into()));
    }
    let qty = qr.q().transpose() * &y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Fit("triangular back-substitution failed".into()))?;

    let residual = &y - &a * &coef;
    let ss_res: f64 = residual.iter().map(|e| e * e).sum();
    let residual_rms_v = (ss_res / n as f64).sqrt();
    let mean = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    // Zero-variance data (to rounding) gets the convention: perfect when the
    // residuals vanish too, else meaningless and reported as 0. The threshold
    // is scaled because summing identical values already rounds at ~1e-16.
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let r_squared = if (ss_tot / n as f64).sqrt() <= 1e-12 * scale {
        if residual_rms_v <= 1e-12 * scale {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };

    Ok(FitReport {
        coefficients: coef.iter().copied().collect(),
        r_squared,
        residual_rms_v,
        n_points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecm::{simulate, EcmState};
    use crate::hppc::{generate_profile, segment_pulses, HppcProfileSpec, PulsePhase};
    use crate::presets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_samples(n: usize) -> OcvSampleSet {
        let poly = presets::lifes2_aa_ocv();
        OcvSampleSet::from_points(
            (0..n)
                .map(|k| {
                    let soc = k as f64 / (n - 1) as f64;
                    (soc, poly.eval(soc))
                })
                .collect(),
        )
    }

    #[test]
    fn noiseless_fit_recovers_generating_coefficients() {
        let report = fit_polynomial(&reference_samples(20), 5).unwrap();
        let truth = presets::lifes2_aa_ocv();
        for (got, want) in report.coefficients.iter().zip(truth.coefficients()) {
            assert!((got - want).abs() < 1e-9, "coef {got} vs {want}");
        }
        assert!(report.r_squared > 1.0 - 1e-12);
        assert!(report.residual_rms_v < 1e-12);
        assert_eq!(report.n_points, 20);
        let poly = report.to_ocv_polynomial().unwrap();
        assert!((poly.eval(0.5) - truth.eval(0.5)).abs() < 1e-9);
    }

    #[test]
    fn constant_data_uses_the_zero_variance_convention() {
        let samples = OcvSampleSet::from_points(
            (0..8).map(|k| (k as f64 / 7.0, 1.35)).collect(),
        );
        let report = fit_polynomial(&samples, 5).unwrap();
        assert_eq!(report.r_squared, 1.0);
        for c in &report.coefficients[..5] {
            assert!(c.abs() < 1e-9, "stray coefficient {c}");
        }
        assert!((report.coefficients[5] - 1.35).abs() < 1e-9);
    }

    #[test]
    fn noisy_fit_keeps_high_r_squared() {
        let poly = presets::lifes2_aa_ocv();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let pts: Vec<(f64, f64)> = (0..20)
                .map(|k| {
                    let soc = 0.05 * (k + 1) as f64;
                    // Uniform noise with ~1 mV scale stands in for meter noise.
                    (soc, poly.eval(soc) + 1e-3 * rng.gen_range(-1.73..1.73))
                })
                .collect();
            let report = fit_polynomial(&OcvSampleSet::from_points(pts), 5).unwrap();
            assert!(report.r_squared >= 0.999, "r^2 = {}", report.r_squared);
        }
    }

    #[test]
    fn too_few_points_or_duplicates_refuse_to_fit() {
        assert!(fit_polynomial(&reference_samples(6), 5).is_err());
        let dup = OcvSampleSet::from_points(vec![
            (0.1, 1.4),
            (0.1, 1.41),
            (0.3, 1.45),
            (0.5, 1.5),
            (0.7, 1.55),
            (0.8, 1.56),
            (0.9, 1.58),
        ]);
        assert!(fit_polynomial(&dup, 5).is_err());
    }

    #[test]
    fn lower_degree_report_pads_to_polynomial_form() {
        let pts: Vec<(f64, f64)> =
            (0..6).map(|k| (k as f64 / 5.0, 1.0 + 0.2 * k as f64 / 5.0)).collect();
        let report = fit_polynomial(&OcvSampleSet::from_points(pts), 1).unwrap();
        assert_eq!(report.coefficients.len(), 2);
        let poly = report.to_ocv_polynomial().unwrap();
        assert!((poly.eval(0.0) - 1.0).abs() < 1e-9);
        assert!((poly.eval(1.0) - 1.2).abs() < 1e-9);
    }

    #[test]
    fn extraction_from_a_closed_loop_simulation_is_millivolt_accurate() {
        let spec = presets::lifes2_aa_cell();
        let table = presets::lifes2_aa_params();
        let poly = presets::lifes2_aa_ocv();
        // Rests of 3250 s clear five times the slowest branch in the table
        // (tau_2 ~ 628 s near full charge); 0.8 A keeps four full pulses
        // inside the 10800 C capacity.
        let profile_spec = HppcProfileSpec {
            amplitude_a: 0.8,
            frequency_hz: 1.0 / 6500.0,
            duty_cycle: 0.5,
            duration_s: 26000.0,
            sample_interval_s: 2.5,
            phase: PulsePhase::PulseFirst,
        };
        let profile = generate_profile(&profile_spec).unwrap();
        let sim =
            simulate(&profile, &spec, &table, &poly, &EcmState::at_rest(1.0), 2.5).unwrap();
        let seg = segment_pulses(&sim.trace, 0.4).unwrap();
        let set = extract_ocv_points(&sim.trace, &seg, &spec, 1.0).unwrap();
        assert_eq!(set.len(), 4);
        for p in &set.points {
            let err = (p.ocv_v - poly.eval(p.soc)).abs();
            assert!(err < 1e-3, "residual polarization {err} V at soc {}", p.soc);
            assert!(!p.deviated);
        }
    }

    #[test]
    fn pulse_free_trace_yields_one_point_at_initial_soc() {
        let spec = presets::lifes2_aa_cell();
        let times: Vec<f64> = (0..12).map(|k| k as f64 * 2.5).collect();
        let trace =
            CurrentVoltageTrace::new(times, vec![0.0; 12], Some(vec![1.45; 12])).unwrap();
        let seg = segment_pulses(&trace, 0.75).unwrap();
        let set = extract_ocv_points(&trace, &seg, &spec, 1.0).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.points[0].soc, 1.0);
        assert_eq!(set.points[0].ocv_v, 1.45);
        assert_eq!(set.points[0].source_pulse, -1);
    }

    #[test]
    fn short_rests_are_excluded_with_a_count() {
        let spec = presets::lifes2_aa_cell();
        let times: Vec<f64> = (0..10).map(|k| k as f64 * 2.5).collect();
        let mut currents = vec![0.0; 10];
        for c in currents.iter_mut().take(4) {
            *c = 1.5;
        }
        let trace = CurrentVoltageTrace::new(times, currents, Some(vec![1.4; 10])).unwrap();
        let seg = segment_pulses(&trace, 0.75).unwrap();
        // One pulse with a 6-sample rest: too short to trust.
        let set = extract_ocv_points(&trace, &seg, &spec, 1.0).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.n_excluded_short, 1);
    }

    #[test]
    fn non_monotone_recovery_raises_the_deviation_flag() {
        let spec = presets::lifes2_aa_cell();
        let times: Vec<f64> = (0..20).map(|k| k as f64 * 2.5).collect();
        let mut currents = vec![0.0; 20];
        for c in currents.iter_mut().take(4) {
            *c = 1.5;
        }
        let mut voltages = vec![1.40; 20];
        voltages[10] = 1.45; // mid-rest spike well above the final sample
        let trace = CurrentVoltageTrace::new(times, currents, Some(voltages)).unwrap();
        let seg = segment_pulses(&trace, 0.75).unwrap();
        let set = extract_ocv_points(&trace, &seg, &spec, 1.0).unwrap();
        assert_eq!(set.len(), 1);
        assert!(set.points[0].deviated);
        // The value itself is still the final sample, not the spike.
        assert_eq!(set.points[0].ocv_v, 1.40);
    }

    #[test]
    fn extraction_requires_a_voltage_column() {
        let spec = presets::lifes2_aa_cell();
        let times: Vec<f64> = (0..12).map(|k| k as f64 * 2.5).collect();
        let trace = CurrentVoltageTrace::new(times, vec![0.0; 12], None).unwrap();
        let seg = segment_pulses(&trace, 0.75).unwrap();
        assert!(extract_ocv_points(&trace, &seg, &spec, 1.0).is_err());
    }
}
