//! The optimality system of the entropic problem, assembled densely.
//!
//! Plans are vectorized column-major (`k = j·m + i`) so that the constraint
//! matrix has the Kronecker form `E = [1ₙ ⊗ Iₘ, Iₙ ⊗ 1ₘ]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::forward::{HalfStep, Trajectory};
use crate::implicit::GradTriple;
use crate::linalg::lu_solve;
use crate::matrix::Matrix;
use crate::ot::{check_lambda, CostMatrix, Marginal, TransportPlan};

/// Largest `m·n` the dense oracle accepts.
pub const DENSE_ORACLE_LIMIT: usize = 400;

/// Primal plan and dual potentials of the entropic problem.
#[derive(Debug, Clone, PartialEq)]
pub struct KktPoint {
    /// Column-major vectorized plan.
    pub p: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl KktPoint {
    pub fn new(p: Vec<f64>, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = p.iter().enumerate().find(|(_, &v)| v.is_nan() || v <= 0.0) {
            return Err(Error::NotPositive {
                what: "KKT plan",
                index,
                value,
            });
        }
        Ok(Self { p, alpha, beta })
    }

    pub fn plan(&self) -> Result<Matrix> {
        Matrix::from_vectorized(self.alpha.len(), self.beta.len(), &self.p)
    }
}

/// Stacked residual of the optimality conditions:
/// `[c + λ log p + 1ₙ⊗α + β⊗1ₘ; rowsum(p) − a; colsum(p) − b]`.
pub fn kkt_residual(cost: &CostMatrix, a: &Marginal, b: &Marginal, point: &KktPoint, lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let (m, n) = (cost.rows(), cost.cols());
    for (what, expected, found) in [
        ("row marginal", m, a.len()),
        ("column marginal", n, b.len()),
        ("alpha", m, point.alpha.len()),
        ("beta", n, point.beta.len()),
        ("KKT plan", m * n, point.p.len()),
    ] {
        if expected != found {
            return Err(Error::DimensionMismatch { what, expected, found });
        }
    }
    if let Some((index, &value)) = point.p.iter().enumerate().find(|(_, &v)| v.is_nan() || v <= 0.0) {
        return Err(Error::NotPositive {
            what: "KKT plan",
            index,
            value,
        });
    }

    let mut out = Vec::with_capacity(m * n + m + n);
    for j in 0..n {
        for i in 0..m {
            let k = j * m + i;
            out.push(cost.entries()[(i, j)] + lambda * libm::log(point.p[k]) + point.alpha[i] + point.beta[j]);
        }
    }
    let plan = point.plan()?;
    out.extend(plan.row_sums().iter().zip(a.as_slice()).map(|(s, ai)| s - ai));
    out.extend(plan.col_sums().iter().zip(b.as_slice()).map(|(s, bj)| s - bj));
    Ok(out)
}

/// Reads the dual potentials off the accumulated log-scalings of a recorded
/// forward pass.
///
/// Every half-step adds a per-row or per-column constant to `log P`; their
/// running sums `f, g` give `α = −λ(f + gₙ)` and `β = −λ(g − gₙ)`, which
/// fixes the gauge `βₙ = 0`.
pub fn recover_duals(trajectory: &Trajectory, lambda: f64) -> Result<KktPoint> {
    check_lambda(lambda)?;
    let steps = trajectory.steps();
    let first = steps
        .first()
        .ok_or(Error::IncompleteTrajectory { expected: 1, found: 0 })?;
    let (m, n) = first.shape();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    for (k, tag) in trajectory.half_step_tags().iter().enumerate().skip(1) {
        let (prev, next) = (&steps[k - 1], &steps[k]);
        match tag {
            HalfStep::Column => {
                for (j, gj) in g.iter_mut().enumerate() {
                    *gj += next[(0, j)] - prev[(0, j)];
                }
            }
            HalfStep::Row => {
                for (i, fi) in f.iter_mut().enumerate() {
                    *fi += next[(i, 0)] - prev[(i, 0)];
                }
            }
            HalfStep::Init => {}
        }
    }
    let g_last = g[n - 1];
    let alpha = f.iter().map(|fi| -lambda * (fi + g_last)).collect();
    let beta = g.iter().map(|gj| -lambda * (gj - g_last)).collect();
    let last = &steps[steps.len() - 1];
    let p = last.map(libm::exp).vectorize();
    KktPoint::new(p, alpha, beta)
}

/// Marginal constraint matrix `E = [1ₙ ⊗ Iₘ, Iₙ ⊗ 1ₘ] ∈ ℝ^{mn×(m+n)}`.
pub fn constraint_matrix(m: usize, n: usize) -> Matrix {
    let mut e = Matrix::zeros(m * n, m + n);
    for j in 0..n {
        for i in 0..m {
            let k = j * m + i;
            e[(k, i)] = 1.0;
            e[(k, m + j)] = 1.0;
        }
    }
    e
}

/// `E` with its redundant last column removed; full column rank `m + n − 1`.
pub fn reduced_constraint_matrix(m: usize, n: usize) -> Matrix {
    let e = constraint_matrix(m, n);
    Matrix::from_fn(m * n, m + n - 1, |r, c| e[(r, c)])
}

/// `[[λ diag(p)⁻¹, Ẽ], [Ẽᵀ, 0]]` together with `Ẽ`.
#[derive(Debug, Clone)]
pub struct DenseKkt {
    pub k: Matrix,
    pub e_tilde: Matrix,
}

impl DenseKkt {
    pub fn assemble(plan: &Matrix, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let (m, n) = plan.shape();
        let mn = m * n;
        if mn > DENSE_ORACLE_LIMIT {
            return Err(Error::OracleTooLarge {
                what: "dense KKT system",
                size: mn,
                limit: DENSE_ORACLE_LIMIT,
            });
        }
        let p = plan.vectorize();
        if let Some((index, &value)) = p.iter().enumerate().find(|(_, &v)| v.is_nan() || v <= 0.0) {
            return Err(Error::NotPositive {
                what: "plan",
                index,
                value,
            });
        }
        let e_tilde = reduced_constraint_matrix(m, n);
        let dim = mn + m + n - 1;
        let mut k = Matrix::zeros(dim, dim);
        for (idx, &pk) in p.iter().enumerate() {
            k[(idx, idx)] = lambda / pk;
            for c in 0..m + n - 1 {
                let v = e_tilde[(idx, c)];
                if v != 0.0 {
                    k[(idx, mn + c)] = v;
                    k[(mn + c, idx)] = v;
                }
            }
        }
        Ok(Self { k, e_tilde })
    }
}

/// Backward pass by solving the full optimality system
/// `K [∇c ℓ; −∇[a; b̃] ℓ] = [−∇p ℓ; 0]` with a general dense LU.
pub fn dense_kkt_backward(plan: &TransportPlan, grad_p: &Matrix, lambda: f64) -> Result<GradTriple> {
    let p = plan.entries();
    let (m, n) = p.shape();
    if grad_p.shape() != (m, n) {
        return Err(Error::DimensionMismatch {
            what: "plan gradient",
            expected: m * n,
            found: grad_p.rows() * grad_p.cols(),
        });
    }
    let kkt = DenseKkt::assemble(p, lambda)?;
    let mn = m * n;
    let mut rhs: Vec<f64> = grad_p.vectorize().into_iter().map(|g| -g).collect();
    rhs.resize(kkt.k.rows(), 0.0);
    let x = lu_solve(&kkt.k, &rhs)?;
    let grad_c = Matrix::from_vectorized(m, n, &x[..mn])?;
    let grad_a = x[mn..mn + m].iter().map(|v| -v).collect();
    let mut grad_b: Vec<f64> = x[mn + m..].iter().map(|v| -v).collect();
    grad_b.push(0.0);
    Ok(GradTriple { grad_c, grad_a, grad_b })
}
