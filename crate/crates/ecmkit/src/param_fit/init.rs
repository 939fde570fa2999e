//! Data-driven starting tables for the parameter fit.
//!
//! Levenberg–Marquardt converges locally, so the starting point decides which
//! basin it lands in. The estimates built here are deliberately crude — the
//! optimizer refines every value — but they aim for the right order of
//! magnitude per component:
//!
//! * series resistance from the instantaneous voltage jump at pulse edges,
//! * both RC branches by peeling two exponentials off each relaxation tail
//!   (slow branch from the late half, fast branch from the early residue),
//! * geometric mid-bounds wherever the trace offers nothing better.
//!
//! Branch labels carry across the table by continuity, not by speed: real
//! cells let the two branches cross in time constant as SOC moves, and the
//! column-wise interpolation between two rows whose labels point at
//! physically different branches manufactures a blend neither row describes.
//! A final pass flips rows so each one's columns line up with its
//! predecessor's.

use crate::error::Result;
use crate::hppc::segment_pulses;
use crate::params::{RcParams, SocParameterTable};

use super::{nearest_breakpoint, FitProblem};

/// A relaxation tail needs at least this many samples to be worth peeling.
const MIN_TAIL_SAMPLES: usize = 8;

/// Deviations below this fraction of the tail's largest deviation are
/// dropped before log-linear fitting; near the settled voltage the signal
/// drowns in noise and window-truncation error.
const TAIL_FLOOR_FRACTION: f64 = 0.02;

/// Builds the starting table for [`super::fit`] when the caller provides
/// none. Falls back to mid-bounds rows when the trace has no usable pulses.
pub(super) fn smart_initial_table(problem: &FitProblem) -> Result<SocParameterTable> {
    let n_bins = problem.breakpoints.len();
    let bins = gather_estimates(problem).unwrap_or_else(|| vec![BinEstimates::default(); n_bins]);
    let mid = problem.bounds.geometric_mid();

    let pick = |f: fn(&BinEstimates) -> &Vec<f64>, fallback: f64| -> Vec<f64> {
        let means: Vec<Option<f64>> = bins.iter().map(|b| mean(f(b))).collect();
        fill_nearest(&means, &problem.breakpoints, fallback)
    };
    let r_s = pick(|b| &b.r_s, mid.r_s);
    let r_1 = pick(|b| &b.r_1, mid.r_1);
    let r_2 = pick(|b| &b.r_2, mid.r_2);
    let c_1 = pick(|b| &b.c_1, mid.c_1);
    let c_2 = pick(|b| &b.c_2, mid.c_2);

    let mut rows: Vec<RcParams> =
        (0..n_bins).map(|b| RcParams::new(r_s[b], r_1[b], r_2[b], c_1[b], c_2[b])).collect();
    orient_rows_by_continuity(&mut rows);
    let rows = rows.iter().map(|r| problem.bounds.clamp_row(r)).collect();
    SocParameterTable::new(problem.breakpoints.clone(), rows)
}

/// Flips each row's branch columns, or not, to minimise the log-space jump
/// from its predecessor in resistance and time constant. The peel labels
/// every row slow-branch-first, so a table whose branches cross in τ would
/// otherwise swap physical branches between columns mid-table.
fn orient_rows_by_continuity(rows: &mut [RcParams]) {
    for b in 1..rows.len() {
        let p = rows[b - 1];
        let c = rows[b];
        let keep = branch_distance(p.r_1, p.c_1, c.r_1, c.c_1)
            + branch_distance(p.r_2, p.c_2, c.r_2, c.c_2);
        let swap = branch_distance(p.r_1, p.c_1, c.r_2, c.c_2)
            + branch_distance(p.r_2, p.c_2, c.r_1, c.c_1);
        if swap < keep {
            rows[b] = RcParams::new(c.r_s, c.r_2, c.r_1, c.c_2, c.c_1);
        }
    }
}

/// How far apart two (R, C) branches sit, in log resistance plus log τ.
fn branch_distance(r_a: f64, c_a: f64, r_b: f64, c_b: f64) -> f64 {
    (r_a / r_b).ln().abs() + ((r_a * c_a) / (r_b * c_b)).ln().abs()
}

/// Raw per-breakpoint component estimates; one entry per observation.
#[derive(Debug, Default, Clone)]
struct BinEstimates {
    r_s: Vec<f64>,
    r_1: Vec<f64>,
    r_2: Vec<f64>,
    c_1: Vec<f64>,
    c_2: Vec<f64>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Per-component fill: a bin keeps its own mean when it has one, otherwise
/// borrows from the nearest estimated breakpoint, otherwise the fallback.
fn fill_nearest(means: &[Option<f64>], breakpoints: &[f64], fallback: f64) -> Vec<f64> {
    (0..means.len())
        .map(|b| {
            means[b]
                .or_else(|| {
                    let mut best: Option<(f64, f64)> = None;
                    for (j, m) in means.iter().enumerate() {
                        if let Some(v) = m {
                            let d = (breakpoints[j] - breakpoints[b]).abs();
                            if best.is_none_or(|(bd, _)| d < bd) {
                                best = Some((d, *v));
                            }
                        }
                    }
                    best.map(|(_, v)| v)
                })
                .unwrap_or(fallback)
        })
        .collect()
}

/// Scans the trace's pulses and collects edge- and tail-based estimates,
/// grouped by the breakpoint nearest to each pulse's mid-window SOC.
/// `None` when the trace carries no voltage or no pulses at all.
fn gather_estimates(problem: &FitProblem) -> Option<Vec<BinEstimates>> {
    let trace = &problem.trace;
    let v = trace.voltages_v()?;
    let t = trace.times_s();
    let i = trace.currents_a();
    let threshold = trace.max_abs_current_a() / 2.0;
    if !(threshold > 0.0) {
        return None;
    }
    let seg = segment_pulses(trace, threshold).ok()?;
    if seg.is_empty() {
        return None;
    }
    let soc = trace.soc_series(&problem.spec, problem.initial_soc);

    let mut bins = vec![BinEstimates::default(); problem.breakpoints.len()];
    for w in &seg.pulses {
        let mid_idx = (w.on_start + w.rest_end - 1) / 2;
        let bin = &mut bins[nearest_breakpoint(&problem.breakpoints, soc[mid_idx])];

        // Series resistance from each step edge: the voltage jump divided by
        // the current jump, with the sign folded out (voltage moves against
        // the current on both onset and release).
        let mut edge = |k: usize| {
            if k == 0 || k >= trace.len() {
                return;
            }
            let di = i[k] - i[k - 1];
            if di.abs() < threshold {
                return;
            }
            let r = -(v[k] - v[k - 1]) / di;
            if r.is_finite() && r > 0.0 {
                bin.r_s.push(r);
            }
        };
        edge(w.on_start);
        edge(w.on_end);

        // Branch parameters from the relaxation tail after the pulse.
        let i_on: f64 = i[w.on_start..w.on_end].iter().sum::<f64>() / w.on_len() as f64;
        let t_on = t[w.on_end.min(trace.len() - 1)] - t[w.on_start];
        if let Some((r_1, c_1, r_2, c_2)) =
            peel_relaxation(t, v, w.on_end, w.rest_end, i_on.abs(), t_on)
        {
            bin.r_1.push(r_1);
            bin.c_1.push(c_1);
            bin.r_2.push(r_2);
            bin.c_2.push(c_2);
        }
    }
    Some(bins)
}

/// Splits a rest window's voltage recovery into two exponentials and backs
/// out (R_1, C_1, R_2, C_2), slow branch first. The settled voltage is
/// extrapolated past the window's end, deviations from it are fitted
/// log-linearly on the late half (slow branch), and the early residue after
/// subtracting the slow branch gives the fast one.
fn peel_relaxation(
    t: &[f64],
    v: &[f64],
    start: usize,
    end: usize,
    i_mag: f64,
    t_on: f64,
) -> Option<(f64, f64, f64, f64)> {
    if end - start < MIN_TAIL_SAMPLES || !(i_mag > 0.0) || !(t_on > 0.0) {
        return None;
    }
    let v_inf = settled_voltage(&v[start..end]);
    let t0 = t[start];

    let raw: Vec<(f64, f64)> = (start..end)
        .map(|k| (t[k] - t0, (v_inf - v[k]).abs()))
        .collect();
    let d_max = raw.iter().fold(0.0_f64, |m, &(_, d)| m.max(d));
    let pts: Vec<(f64, f64)> = raw
        .into_iter()
        .filter(|&(_, d)| d > (TAIL_FLOOR_FRACTION * d_max).max(1e-9))
        .collect();
    if pts.len() < 6 {
        return None;
    }

    // Slow branch: by the late half of the tail the fast branch has died out.
    let (slope, intercept) = log_linear_fit(&pts[pts.len() / 2..])?;
    if !(slope < 0.0) {
        return None;
    }
    let tau_slow = -1.0 / slope;
    let a_slow = intercept.exp();

    // Fast branch: whatever the slow branch fails to explain early on.
    let early: Vec<(f64, f64)> = pts[..pts.len() / 2]
        .iter()
        .filter_map(|&(x, d)| {
            let e = d - a_slow * (slope * x).exp();
            (e > 1e-9).then_some((x, e))
        })
        .collect();
    let e_max = early.iter().fold(0.0_f64, |m, &(_, e)| m.max(e));
    let early: Vec<(f64, f64)> = early
        .into_iter()
        .filter(|&(_, e)| e > (TAIL_FLOOR_FRACTION * e_max).max(1e-9))
        .collect();
    let (tau_fast, a_fast) = match log_linear_fit(&early) {
        Some((s, ic)) if s < 0.0 && -1.0 / s < tau_slow => (-1.0 / s, ic.exp()),
        // Residue too small to resolve: posit a much faster branch with a
        // tenth of the amplitude and let the optimizer decide.
        _ => (tau_slow / 10.0, a_slow / 10.0),
    };

    // Each branch reaches I·R·(1 − e^{-t_on/τ}) by the end of the pulse; that
    // is the amplitude it then relaxes from.
    let branch = |a: f64, tau: f64| -> Option<(f64, f64)> {
        let saturation = -(-t_on / tau).exp_m1();
        let r = a / (i_mag * saturation);
        let c = tau / r;
        (r.is_finite() && r > 0.0 && c.is_finite() && c > 0.0).then_some((r, c))
    };
    let (r_1, c_1) = branch(a_slow, tau_slow)?;
    let (r_2, c_2) = branch(a_fast, tau_fast)?;
    Some((r_1, c_1, r_2, c_2))
}

/// Where the tail is heading: extrapolates the settled voltage from three
/// equally spaced late samples, assuming one dominant exponential. Exact for
/// a single exponential regardless of its amplitude or time constant; falls
/// back to the last sample when the geometry degenerates.
fn settled_voltage(window: &[f64]) -> f64 {
    let n = window.len();
    let last = window[n - 1];
    let m = (n - 1) / 4;
    if m == 0 {
        return last;
    }
    let (a, b, c) = (window[n - 1 - 2 * m], window[n - 1 - m], last);
    let denom = a + c - 2.0 * b;
    let span = window.iter().fold(f64::NEG_INFINITY, |x, &v| x.max(v))
        - window.iter().fold(f64::INFINITY, |x, &v| x.min(v));
    if denom.abs() < 1e-12 {
        return last;
    }
    let s = (a * c - b * b) / denom;
    if s.is_finite() && (s - last).abs() <= span.max(1e-12) {
        s
    } else {
        last
    }
}

/// Ordinary least squares of ln(d) against x; returns (slope, intercept).
fn log_linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, d) in pts {
        let y = d.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-12 * (n * sxx).max(1.0) {
        return None;
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    (slope.is_finite() && intercept.is_finite()).then_some((slope, intercept))
}
