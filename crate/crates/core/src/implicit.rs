//! Closed-form backward pass of the Sinkhorn operator.
//!
//! Differentiating the KKT conditions of the entropic problem and
//! eliminating the plan block with a Schur complement leaves a single
//! symmetric positive-definite system of size `m + n − 1`:
//!
//! ```text
//! T   = P ⊙ ∇P ℓ
//! [diag(P 1ₙ)  P̃        ] [∇a ℓ]   [T 1ₙ ]
//! [P̃ᵀ          diag(P̃ᵀ1ₘ)] [∇b̃ ℓ] = [T̃ᵀ1ₘ]
//! ∇b ℓ = [∇b̃ ℓ; 0]
//! ∇C ℓ = −λ⁻¹ (T − P ⊙ (∇a ℓ 1ₙᵀ + 1ₘ ∇b ℓᵀ))
//! ```
//!
//! where `~` drops the last column. The cost is independent of how many
//! forward iterations produced `P`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::matrix::Matrix;
use crate::ot::{check_lambda, TransportPlan};

/// Plan entries below this value cannot be inverted reliably in the KKT
/// system and are rejected.
pub const MIN_PLAN_ENTRY: f64 = 1e-300;

/// Dense `m×n` buffers held by [`implicit_backward`]: the plan, `T` and `∇C`.
/// Independent of the number of forward iterations.
pub const RETAINED_MATRICES: usize = 3;

/// Gradients of a scalar loss with respect to the Sinkhorn inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GradTriple {
    pub grad_c: Matrix,
    pub grad_a: Vec<f64>,
    /// Gauge-fixed: the last entry is exactly zero.
    pub grad_b: Vec<f64>,
}

impl GradTriple {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            grad_c: Matrix::zeros(m, n),
            grad_a: alloc::vec![0.0; m],
            grad_b: alloc::vec![0.0; n],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grad_c.is_finite()
            && self.grad_a.iter().all(|x| x.is_finite())
            && self.grad_b.iter().all(|x| x.is_finite())
    }
}

/// The reduced `(m+n−1)`-dimensional system `Ẽᵀ diag(p) Ẽ x = Ẽᵀ t`.
#[derive(Debug, Clone)]
pub struct SchurSystem {
    pub matrix: Matrix,
    pub rhs: Vec<f64>,
}

impl SchurSystem {
    /// Assembles the block matrix from the plan's own row and column sums
    /// and the right-hand side `[T 1ₙ; T̃ᵀ 1ₘ]`.
    pub fn assemble(plan: &Matrix, t: &Matrix) -> Self {
        let (m, n) = plan.shape();
        let k = m + n - 1;
        let row_sums = plan.row_sums();
        let col_sums = plan.col_sums();
        let mut matrix = Matrix::zeros(k, k);
        for i in 0..m {
            matrix[(i, i)] = row_sums[i];
            for j in 0..n - 1 {
                let p = plan[(i, j)];
                matrix[(i, m + j)] = p;
                matrix[(m + j, i)] = p;
            }
        }
        for j in 0..n - 1 {
            matrix[(m + j, m + j)] = col_sums[j];
        }
        let mut rhs = t.row_sums();
        rhs.extend_from_slice(&t.col_sums()[..n - 1]);
        Self { matrix, rhs }
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }
}

/// Solves a [`SchurSystem`] by Cholesky factorization.
///
/// If the factorization breaks down, the diagonal is shifted by
/// `1e-12 · tr(K) / dim` and factorized once more. The solution receives one
/// step of iterative refinement against the unshifted matrix.
pub fn spd_solve(system: &SchurSystem) -> Result<Vec<f64>> {
    let k = &system.matrix;
    let dim = system.dim();
    if k.rows() != dim || k.cols() != dim {
        return Err(Error::DimensionMismatch {
            what: "Schur system",
            expected: dim,
            found: k.rows(),
        });
    }
    if dim == 0 {
        return Ok(Vec::new());
    }
    let chol = match Cholesky::factor(k) {
        Ok(c) => c,
        Err(first) => {
            let trace: f64 = (0..dim).map(|i| k[(i, i)]).sum();
            let jitter = 1e-12 * trace / dim as f64;
            let mut shifted = k.clone();
            for i in 0..dim {
                shifted[(i, i)] += jitter;
            }
            Cholesky::factor(&shifted).map_err(|second| Error::Factorization {
                smallest_pivot: f64::min(first.smallest_pivot, second.smallest_pivot),
            })?
        }
    };
    let mut x = chol.solve(&system.rhs);
    let kx = k.mat_vec(&x);
    let r: Vec<f64> = system.rhs.iter().zip(&kx).map(|(b, y)| b - y).collect();
    let dx = chol.solve(&r);
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization {
            smallest_pivot: f64::NAN,
        });
    }
    Ok(x)
}

/// Maps `∇P ℓ` to `(∇C ℓ, ∇a ℓ, ∇b ℓ)` for the plan `P = S_λ(C, a, b)`.
///
/// `plan` may be an approximate forward output; no re-projection onto the
/// transport polytope happens. The block matrix uses the plan's own row and
/// column sums, which coincide with `(a, b)` at the exact solution.
pub fn implicit_backward(plan: &TransportPlan, grad_p: &Matrix, lambda: f64) -> Result<GradTriple> {
    check_lambda(lambda)?;
    let p = plan.entries();
    let (m, n) = p.shape();
    if grad_p.shape() != (m, n) {
        return Err(Error::DimensionMismatch {
            what: "plan gradient",
            expected: m * n,
            found: grad_p.rows() * grad_p.cols(),
        });
    }
    if let Some(index) = grad_p.as_slice().iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "plan gradient",
            index,
        });
    }
    if let Some((index, &value)) = p
        .as_slice()
        .iter()
        .enumerate()
        .find(|(_, &v)| v.is_nan() || v < MIN_PLAN_ENTRY)
    {
        return Err(Error::DegeneratePlan { index, value });
    }

    let t = p.hadamard(grad_p);
    let system = SchurSystem::assemble(p, &t);
    let x = spd_solve(&system)?;

    let grad_a = x[..m].to_vec();
    let mut grad_b = x[m..].to_vec();
    grad_b.push(0.0);

    let inv_lambda = 1.0 / lambda;
    let grad_c = Matrix::from_fn(m, n, |i, j| {
        let u = grad_a[i] + grad_b[j];
        -inv_lambda * (t[(i, j)] - p[(i, j)] * u)
    });
    Ok(GradTriple { grad_c, grad_a, grad_b })
}
