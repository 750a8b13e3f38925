//! Reverse-mode differentiation through the recorded scaling iterations.
//!
//! Baseline for the implicit backward pass: it differentiates exactly the
//! truncated map `(C, a, b) ↦ P⁽τ⁾` and needs every intermediate, so its
//! memory grows linearly in τ.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::forward::{HalfStep, Trajectory};
use crate::matrix::Matrix;
use crate::ot::{check_lambda, log_sum_exp, Marginal};

#[derive(Debug, Clone, PartialEq)]
pub struct UnrolledGrad {
    pub grad_c: Matrix,
    pub grad_a: Vec<f64>,
    pub grad_b: Vec<f64>,
    /// Trajectory snapshots held during the pass, `2τ + 1`.
    pub matrices_retained: usize,
}

pub fn unrolled_backward(
    trajectory: &Trajectory,
    a: &Marginal,
    b: &Marginal,
    grad_p: &Matrix,
    lambda: f64,
) -> Result<UnrolledGrad> {
    check_lambda(lambda)?;
    let steps = trajectory.steps();
    let tags = trajectory.half_step_tags();
    let expected = 2 * trajectory.iterations() + 1;
    if steps.len() != expected || !well_formed(tags) {
        return Err(Error::IncompleteTrajectory {
            expected,
            found: steps.len(),
        });
    }
    let (m, n) = steps[0].shape();
    if a.len() != m {
        return Err(Error::DimensionMismatch {
            what: "row marginal",
            expected: m,
            found: a.len(),
        });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            what: "column marginal",
            expected: n,
            found: b.len(),
        });
    }
    if grad_p.shape() != (m, n) {
        return Err(Error::DimensionMismatch {
            what: "plan gradient",
            expected: m * n,
            found: grad_p.rows() * grad_p.cols(),
        });
    }

    // Seed through P = exp(log P).
    let last = &steps[steps.len() - 1];
    let mut g = Matrix::from_fn(m, n, |i, j| libm::exp(last[(i, j)]) * grad_p[(i, j)]);
    let mut grad_log_a = vec![0.0; m];
    let mut grad_log_b = vec![0.0; n];
    let mut lse = vec![0.0; n.max(m)];

    for k in (1..steps.len()).rev() {
        let x = &steps[k - 1];
        match tags[k] {
            HalfStep::Column => {
                // Y = X − 1ₘ(colLSE(X) − log b)ᵀ
                let sums = g.col_sums();
                for j in 0..n {
                    lse[j] = log_sum_exp((0..m).map(|i| x[(i, j)]));
                    grad_log_b[j] += sums[j];
                }
                for i in 0..m {
                    for j in 0..n {
                        let s = libm::exp(x[(i, j)] - lse[j]);
                        g[(i, j)] -= s * sums[j];
                    }
                }
            }
            HalfStep::Row => {
                // Y = X − (rowLSE(X) − log a)1ₙᵀ
                let sums = g.row_sums();
                for i in 0..m {
                    let row_lse = log_sum_exp(x.row(i).iter().copied());
                    grad_log_a[i] += sums[i];
                    for j in 0..n {
                        let s = libm::exp(x[(i, j)] - row_lse);
                        g[(i, j)] -= s * sums[i];
                    }
                }
            }
            HalfStep::Init => unreachable!("checked by well_formed"),
        }
    }

    let grad_c = g.scale(-1.0 / lambda);
    let grad_a = grad_log_a.iter().zip(a.as_slice()).map(|(g, w)| g / w).collect();
    let grad_b = grad_log_b.iter().zip(b.as_slice()).map(|(g, w)| g / w).collect();
    Ok(UnrolledGrad {
        grad_c,
        grad_a,
        grad_b,
        matrices_retained: steps.len(),
    })
}

fn well_formed(tags: &[HalfStep]) -> bool {
    tags.first() == Some(&HalfStep::Init)
        && tags[1..]
            .chunks(2)
            .all(|pair| pair == [HalfStep::Column, HalfStep::Row])
}
