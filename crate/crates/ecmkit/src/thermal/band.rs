//! Banded LU factorization without pivoting.
//!
//! The finite-volume conduction and potential systems assembled in this
//! module family are (weakly) diagonally dominant with positive diagonals,
//! for which LU without pivoting is stable and fill-in stays inside the
//! band. One step of iterative refinement backstops the factorization so
//! solutions meet the 1e-10 relative-residual contract with margin.

use crate::error::{Error, Result};

/// Square banded matrix with `kl` sub- and `ku` superdiagonals, stored as
/// (kl + ku + 1) diagonals of length `n` (missing corners are zero).
#[derive(Debug, Clone)]
pub(crate) struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// data[(i - j + ku) * n + j] holds entry (i, j).
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        BandedMatrix { n, kl, ku, data: vec![0.0; (kl + ku + 1) * n] }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(i + self.ku >= j && j + self.kl >= i, "({i}, {j}) outside the band");
        (i + self.ku - j) * self.n + j
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.ku < j || j + self.kl < i {
            return 0.0;
        }
        self.data[self.slot(i, j)]
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let s = self.slot(i, j);
        self.data[s] += value;
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let s = self.slot(i, j);
        self.data[s] = value;
    }

    /// y = A·x within the band.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += self.data[self.slot(i, j)] * x[j];
            }
            *yi = acc;
        }
        y
    }

    /// Factors the matrix in place. Fails on a (near-)zero pivot, which for
    /// the diagonally dominant systems here means a singular assembly.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let mut max_diag = 0.0_f64;
        for k in 0..n {
            max_diag = max_diag.max(self.get(k, k).abs());
        }
        let tiny = f64::EPSILON * max_diag.max(f64::MIN_POSITIVE);
        for k in 0..n {
            let pivot = self.get(k, k);
            if !pivot.is_finite() || pivot.abs() <= tiny {
                return Err(Error::Solver(format!(
                    "singular banded system: pivot {pivot:e} at row {k}"
                )));
            }
            let i_end = (k + self.kl).min(n - 1);
            let j_end = (k + self.ku).min(n - 1);
            for i in (k + 1)..=i_end {
                let l = self.get(i, k) / pivot;
                self.set(i, k, l);
                if l != 0.0 {
                    for j in (k + 1)..=j_end {
                        let upd = l * self.get(k, j);
                        if upd != 0.0 {
                            self.add(i, j, -upd);
                        }
                    }
                }
            }
        }
        Ok(BandedLu { lu: self })
    }
}

/// Factored form of a [`BandedMatrix`]; L has an implicit unit diagonal.
#[derive(Debug, Clone)]
pub(crate) struct BandedLu {
    lu: BandedMatrix,
}

impl BandedLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        // Forward: L·y = b.
        for i in 1..n {
            let lo = i.saturating_sub(self.lu.kl);
            let mut acc = x[i];
            for j in lo..i {
                acc -= self.lu.get(i, j) * x[j];
            }
            x[i] = acc;
        }
        // Backward: U·x = y.
        for i in (0..n).rev() {
            let hi = (i + self.lu.ku).min(n - 1);
            let mut acc = x[i];
            for j in (i + 1)..=hi {
                acc -= self.lu.get(i, j) * x[j];
            }
            x[i] = acc / self.lu.get(i, i);
        }
        x
    }
}

/// Factors and solves A·x = b, polishes with one refinement pass, and
/// enforces a 1e-10 relative residual.
pub(crate) fn solve_checked(a: &BandedMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let lu = a.clone().factor()?;
    let mut x = lu.solve(b);
    let b_scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);

    let residual = |x: &[f64]| -> Vec<f64> {
        let ax = a.matvec(x);
        b.iter().zip(ax).map(|(bi, axi)| bi - axi).collect()
    };
    let rel = |r: &[f64]| r.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / b_scale;

    let mut r = residual(&x);
    if rel(&r) > 1e-12 {
        let dx = lu.solve(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
        r = residual(&x);
    }
    let achieved = rel(&r);
    if !achieved.is_finite() || achieved > 1e-10 {
        return Err(Error::Solver(format!(
            "linear solve stalled at relative residual {achieved:e}"
        )));
    }
    Ok(x)
}
