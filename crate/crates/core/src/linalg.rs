//! Small dense factorizations.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Lower-triangular Cholesky factor `L` with `K = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    factor: Matrix,
}

/// Smallest pivot seen up to and including the one that failed.
#[derive(Debug, Clone, Copy)]
pub struct PivotFailure {
    pub smallest_pivot: f64,
}

impl Cholesky {
    pub fn factor(k: &Matrix) -> core::result::Result<Self, PivotFailure> {
        let n = k.rows();
        debug_assert_eq!(n, k.cols());
        let mut l = Matrix::zeros(n, n);
        let mut smallest = f64::INFINITY;
        for j in 0..n {
            let mut d = k[(j, j)];
            for p in 0..j {
                d -= l[(j, p)] * l[(j, p)];
            }
            smallest = smallest.min(d);
            if !d.is_finite() || d <= 0.0 {
                return Err(PivotFailure {
                    smallest_pivot: smallest,
                });
            }
            let d = libm::sqrt(d);
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = k[(i, j)];
                for p in 0..j {
                    s -= l[(i, p)] * l[(j, p)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { factor: l })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let l = &self.factor;
        let n = l.rows();
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for p in 0..i {
                s -= l[(i, p)] * y[p];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in i + 1..n {
                s -= l[(p, i)] * y[p];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }

    pub fn factor_matrix(&self) -> &Matrix {
        &self.factor
    }
}

/// General dense solve through nalgebra's partially pivoted LU.
///
/// Used by the verification oracles; production paths go through
/// [`Cholesky`].
pub fn lu_solve(a: &Matrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch {
            what: "square system",
            expected: n,
            found: a.cols(),
        });
    }
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            what: "right-hand side",
            expected: n,
            found: rhs.len(),
        });
    }
    let dense = to_nalgebra(a);
    let b = nalgebra::DVector::from_column_slice(rhs);
    let x = dense.lu().solve(&b).ok_or(Error::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(x.as_slice().to_vec())
}

/// Singular values in descending order.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let svd = to_nalgebra(a).svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Moore-Penrose pseudoinverse.
pub fn pseudo_inverse(a: &Matrix) -> Result<Matrix> {
    let pinv = to_nalgebra(a).pseudo_inverse(1e-14).map_err(|_| Error::Singular)?;
    Ok(Matrix::from_fn(pinv.nrows(), pinv.ncols(), |i, j| pinv[(i, j)]))
}

fn to_nalgebra(a: &Matrix) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}
