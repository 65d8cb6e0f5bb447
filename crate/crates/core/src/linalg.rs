//! Small linear-algebra kernels used by the solver and the conductivity
//! conversions. Dense factorizations of larger matrices go through nalgebra.

use crate::{Error, Result};

/// Tridiagonal matrix stored by its three diagonals.
///
/// `lower[i]` couples row `i + 1` to column `i`, `upper[i]` couples row `i`
/// to column `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            upper: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if row == col {
            self.diag[row]
        } else if col == row + 1 {
            self.upper[row]
        } else if row == col + 1 {
            self.lower[col]
        } else {
            0.0
        }
    }

    /// Dense row-major copy, mostly for tests and dumps.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn row_sum(&self, row: usize) -> f64 {
        let mut s = self.diag[row];
        if row > 0 {
            s += self.lower[row - 1];
        }
        if row + 1 < self.dim() {
            s += self.upper[row];
        }
        s
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// Solves `A x = rhs` in place with the Thomas algorithm.
    ///
    /// `scratch` must have length `dim()`; it holds the modified upper
    /// diagonal. No pivoting, so the matrix must be diagonally dominant or
    /// symmetric positive-definite.
    pub fn solve_in_place(&self, rhs: &mut [f64], scratch: &mut [f64]) -> Result<()> {
        let n = self.dim();
        debug_assert_eq!(rhs.len(), n);
        debug_assert_eq!(scratch.len(), n);
        if n == 0 {
            return Ok(());
        }

        let mut pivot = self.diag[0];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::SingularSystem("zero pivot in row 0".into()));
        }
        let mut inv = 1.0 / pivot;
        scratch[0] = if n > 1 { self.upper[0] * inv } else { 0.0 };
        rhs[0] *= inv;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i - 1] * scratch[i - 1];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::SingularSystem(format!("zero pivot in row {i}")));
            }
            inv = 1.0 / pivot;
            scratch[i] = if i + 1 < n { self.upper[i] * inv } else { 0.0 };
            rhs[i] = (rhs[i] - self.lower[i - 1] * rhs[i - 1]) * inv;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= scratch[i] * rhs[i + 1];
        }
        Ok(())
    }
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
///
/// Pivots smaller than `1e-14` times the largest entry of the matrix are
/// treated as singular.
pub fn solve_dense<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Result<[f64; N]> {
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::SingularSystem("zero or non-finite matrix".into()));
    }
    let tol = 1e-14 * scale;

    for col in 0..N {
        let (piv_row, piv_val) =
            (col..N)
                .map(|r| (r, a[r][col].abs()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if piv_val <= tol {
            return Err(Error::SingularSystem(format!(
                "pivot {piv_val:e} in column {col}"
            )));
        }
        a.swap(col, piv_row);
        b.swap(col, piv_row);
        for r in col + 1..N {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..N {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }

    let mut x = [0.0; N];
    for r in (0..N).rev() {
        let mut s = b[r];
        for c in r + 1..N {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Ok(x)
}

/// Lower Cholesky factor of a symmetric positive-definite matrix given as
/// row-major `n × n` data.
pub fn cholesky_lower(n: usize, data: &[f64]) -> Result<nalgebra::DMatrix<f64>> {
    let m = nalgebra::DMatrix::from_row_slice(n, n, data);
    let asym = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| (m[(i, j)] - m[(j, i)]).abs())
        .fold(0.0_f64, f64::max);
    let scale = m.diagonal().amax().max(f64::MIN_POSITIVE);
    if asym > 1e-9 * scale {
        return Err(Error::NotPositiveDefinite);
    }
    nalgebra::Cholesky::new(m)
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite)
}
