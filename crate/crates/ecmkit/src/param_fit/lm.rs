//! Box-constrained Levenberg–Marquardt over finite-difference Jacobians.
//!
//! The solver is deliberately plain: forward-difference Jacobian (columns
//! evaluated in parallel), damping adapted from the gain ratio between the
//! actual and model-predicted cost reduction, diagonal column-norm scaling,
//! and projection of every trial point onto the bound box. Determinism
//! matters more here than last-drop convergence speed — identical inputs
//! must yield identical fits.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Relative finite-difference step for Jacobian columns.
const FD_REL: f64 = 1e-6;
/// Floor for the diagonal scaling entries; keeps the augmented system
/// nonsingular when a parameter has no effect on the residuals.
const SCALE_FLOOR: f64 = 1e-8;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MIN: f64 = 1e-14;
const LAMBDA_MAX: f64 = 1e14;
/// Gradient-norm stopping threshold, ‖Jᵀr‖∞.
const GTOL: f64 = 1e-12;
const MAX_REJECTS_PER_ITER: usize = 25;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step reduces the cost by less than this
    /// relative amount.
    pub ftol: f64,
    /// Stop when an accepted step moves the point by less than this
    /// relative amount.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 500, ftol: 1e-8, xtol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub x: DVector<f64>,
    /// 0.5·‖r‖² at `x`. Callers that need a differently weighted error
    /// metric (the table fit reports RMS over the aligned prefix) recompute
    /// it from `x`.
    #[allow(dead_code)]
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(x: &mut DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) {
    for j in 0..x.len() {
        x[j] = x[j].clamp(lower[j], upper[j]);
    }
}

fn half_norm_sq(r: &DVector<f64>) -> f64 {
    0.5 * r.iter().map(|e| e * e).sum::<f64>()
}

/// Minimizes 0.5·‖f(x)‖² over the box [lower, upper], starting from `x0`
/// (projected into the box first). `f` must be pure; it is called from
/// multiple threads during Jacobian assembly.
///
/// Never returns a point worse than the best one seen. `converged` is false
/// only when the iteration cap stopped the search.
pub(crate) fn minimize<F>(
    f: &F,
    x0: DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    opts: &LmOptions,
) -> Result<LmOutcome>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    let n = x0.len();
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);
    for j in 0..n {
        if !(lower[j] <= upper[j]) {
            return Err(Error::Fit(format!(
                "inverted bounds at parameter {j}: [{}, {}]",
                lower[j], upper[j]
            )));
        }
    }

    let mut x = x0;
    project(&mut x, lower, upper);
    let mut r = f(&x)?;
    let mut cost = half_norm_sq(&r);
    if !cost.is_finite() {
        return Err(Error::Fit(
            "non-finite cost at the initial point; try wider bounds or a different start".into(),
        ));
    }
    if n == 0 || opts.max_iterations == 0 {
        return Ok(LmOutcome { x, cost, iterations: 0, converged: false });
    }

    let m = r.len();
    let mut lambda = LAMBDA_INIT;
    let mut nu = 2.0;
    let mut scale = DVector::from_element(n, SCALE_FLOOR);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;

        // Forward-difference Jacobian, one column per parameter. Columns are
        // gathered by index, so the rayon schedule cannot change the result.
        let base = &r;
        let columns: Vec<DVector<f64>> = (0..n)
            .into_par_iter()
            .map(|j| -> Result<DVector<f64>> {
                let mut xj = x.clone();
                let mut delta = FD_REL * x[j].abs().max(1.0);
                if x[j] + delta > upper[j] {
                    delta = -delta;
                }
                xj[j] = (x[j] + delta).clamp(lower[j], upper[j]);
                let actual = xj[j] - x[j];
                if actual == 0.0 {
                    // Degenerate box (lower == upper): the parameter is
                    // fixed and its column is zero.
                    return Ok(DVector::zeros(m));
                }
                let rj = f(&xj)?;
                Ok((rj - base) / actual)
            })
            .collect::<Result<Vec<_>>>()?;
        let jac = DMatrix::from_columns(&columns);

        // Parameters with an exactly zero column are locally invisible;
        // their step components are zeroed so they never drift on rounding
        // noise from the solve.
        let dead: Vec<bool> = (0..n).map(|j| jac.column(j).norm() == 0.0).collect();
        for j in 0..n {
            scale[j] = scale[j].max(jac.column(j).norm());
        }

        let gradient = jac.transpose() * &r;
        if gradient.amax() <= GTOL {
            converged = true;
            break;
        }

        // Inner loop: raise the damping until a step is accepted.
        let mut accepted = false;
        for _ in 0..MAX_REJECTS_PER_ITER {
            let raise = |lambda: &mut f64, nu: &mut f64| {
                *lambda = (*lambda * *nu).min(LAMBDA_MAX);
                *nu = (*nu * 2.0).min(1e6);
            };
            // Augmented least squares [J; sqrt(lambda)·D]·delta = [−r; 0].
            let mut aug = DMatrix::zeros(m + n, n);
            aug.view_mut((0, 0), (m, n)).copy_from(&jac);
            for j in 0..n {
                aug[(m + j, j)] = lambda.sqrt() * scale[j];
            }
            let mut rhs = DVector::zeros(m + n);
            rhs.rows_mut(0, m).copy_from(&(-&r));
            let qr = aug.qr();
            let qty = qr.q().transpose() * rhs;
            let mut step = match qr.r().solve_upper_triangular(&qty) {
                Some(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => {
                    raise(&mut lambda, &mut nu);
                    continue;
                }
            };
            for j in 0..n {
                if dead[j] {
                    step[j] = 0.0;
                }
            }

            let mut x_trial = &x + &step;
            project(&mut x_trial, lower, upper);
            let moved = (&x_trial - &x).norm();
            if moved == 0.0 {
                raise(&mut lambda, &mut nu);
                continue;
            }
            // Reduction the local linear model promises for the projected
            // step; the gain ratio against it drives the damping update.
            let taken = &x_trial - &x;
            let j_step = &jac * &taken;
            let predicted = -gradient.dot(&taken) - 0.5 * j_step.norm_squared();
            if !(predicted > 0.0) {
                raise(&mut lambda, &mut nu);
                continue;
            }
            let cost_trial = match f(&x_trial) {
                Ok(rt) => {
                    let c = half_norm_sq(&rt);
                    if c < cost && c.is_finite() {
                        r = rt;
                        Some(c)
                    } else {
                        None
                    }
                }
                // A failed evaluation inside the box is treated as an
                // infinitely bad trial, not a fatal error.
                Err(_) => None,
            };
            match cost_trial {
                Some(c) => {
                    let drop = cost - c;
                    let gain = drop / predicted;
                    let small_step = moved <= opts.xtol * (x.norm() + opts.xtol);
                    x = x_trial;
                    cost = c;
                    lambda = (lambda * (1.0 - (2.0 * gain - 1.0).powi(3)).max(1.0 / 3.0))
                        .max(LAMBDA_MIN);
                    nu = 2.0;
                    accepted = true;
                    if drop <= opts.ftol * cost.max(f64::MIN_POSITIVE) || small_step || cost == 0.0
                    {
                        converged = true;
                    }
                    break;
                }
                None => raise(&mut lambda, &mut nu),
            }
        }

        if !accepted {
            // Damping exhausted without improvement: the incumbent is a
            // practical stationary point.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    Ok(LmOutcome { x, cost, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec(vals: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(vals)
    }

    #[test]
    fn solves_a_linear_least_squares_problem() {
        // Residuals r_k = x0 + k·x1 − y_k with y from (2, −3).
        let f = |x: &DVector<f64>| -> Result<DVector<f64>> {
            Ok(DVector::from_fn(8, |k, _| {
                let t = k as f64;
                x[0] + t * x[1] - (2.0 - 3.0 * t)
            }))
        };
        let out = minimize(
            &f,
            vec(&[0.0, 0.0]),
            &vec(&[-10.0, -10.0]),
            &vec(&[10.0, 10.0]),
            &LmOptions::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 2.0).abs() < 1e-6, "x0 = {}", out.x[0]);
        assert!((out.x[1] + 3.0).abs() < 1e-6, "x1 = {}", out.x[1]);
        assert!(out.cost < 1e-12);
    }

    #[test]
    fn respects_bounds_on_the_way_to_the_optimum() {
        // Unconstrained optimum at (2, −3); box keeps x1 ≥ −1.
        let f = |x: &DVector<f64>| -> Result<DVector<f64>> {
            Ok(DVector::from_fn(8, |k, _| {
                let t = k as f64;
                x[0] + t * x[1] - (2.0 - 3.0 * t)
            }))
        };
        let out = minimize(
            &f,
            vec(&[0.0, 0.0]),
            &vec(&[-10.0, -1.0]),
            &vec(&[10.0, 10.0]),
            &LmOptions::default(),
        )
        .unwrap();
        assert!(out.x[1] >= -1.0 - 1e-12);
        // The constrained optimum pins x1 at the bound.
        assert!((out.x[1] + 1.0).abs() < 1e-6, "x1 = {}", out.x[1]);
    }

    #[test]
    fn rosenbrock_valley_converges() {
        let f = |x: &DVector<f64>| -> Result<DVector<f64>> {
            Ok(vec(&[10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]))
        };
        let out = minimize(
            &f,
            vec(&[-1.2, 1.0]),
            &vec(&[-5.0, -5.0]),
            &vec(&[5.0, 5.0]),
            &LmOptions::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-4 && (out.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn zero_iteration_budget_returns_the_start() {
        let f = |x: &DVector<f64>| -> Result<DVector<f64>> { Ok(vec(&[x[0] - 5.0])) };
        let opts = LmOptions { max_iterations: 0, ..Default::default() };
        let out = minimize(&f, vec(&[1.0]), &vec(&[-10.0]), &vec(&[10.0]), &opts).unwrap();
        assert_eq!(out.x[0], 1.0);
        assert_eq!(out.iterations, 0);
        assert!(!out.converged);
    }

    #[test]
    fn insensitive_parameters_stay_put() {
        // x1 never enters the residuals; the scaling floor must keep the
        // system solvable and leave x1 where it started.
        let f = |x: &DVector<f64>| -> Result<DVector<f64>> { Ok(vec(&[x[0] - 5.0])) };
        let f2 = |x: &DVector<f64>| f(&vec(&[x[0]]));
        let out = minimize(
            &f2,
            vec(&[0.0, 0.7]),
            &vec(&[-10.0, -10.0]),
            &vec(&[10.0, 10.0]),
            &LmOptions::default(),
        )
        .unwrap();
        assert!((out.x[0] - 5.0).abs() < 1e-6);
        assert_eq!(out.x[1], 0.7);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = |_: &DVector<f64>| -> Result<DVector<f64>> { Ok(vec(&[f64::NAN])) };
        assert!(minimize(
            &f,
            vec(&[0.0]),
            &vec(&[-1.0]),
            &vec(&[1.0]),
            &LmOptions::default()
        )
        .is_err());
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let f = |x: &DVector<f64>| -> Result<DVector<f64>> {
            Ok(DVector::from_fn(12, |k, _| {
                let t = k as f64 / 11.0;
                x[0] * (-t / x[1].abs().max(1e-9)).exp() - (-t / 0.3).exp() * 2.0
            }))
        };
        let run = || {
            minimize(
                &f,
                vec(&[1.0, 1.0]),
                &vec(&[1e-3, 1e-3]),
                &vec(&[10.0, 10.0]),
                &LmOptions::default(),
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.x, b.x);
        assert_eq!(a.cost, b.cost);
        assert_eq!(a.iterations, b.iterations);
    }
}
